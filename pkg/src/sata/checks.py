"""Self-checks behind the ``gradcheck`` and ``roundtrip`` subcommands."""

import numpy as np

from . import autodiff as ad
from .autodiff import gradcheck
from .autodiff.nn import Module
from .autodiff.tensor import default_dtype

OP_TOL = 1e-3
BLOCK_TOL = 1e-3
DEEP_TOL = 1e-2


def _wsum(y):
    w = np.random.default_rng(y.size).standard_normal(y.shape)
    return ad.sum(ad.mul(y, w))


def op_cases(rng):
    rnd = lambda *s: rng.standard_normal(s)  # noqa: E731
    pos = lambda *s: rng.uniform(0.5, 2.0, s)  # noqa: E731
    idx = np.array([0, 2, 2, 1, 3])
    return {
        "add": (ad.add, [rnd(3, 4), rnd(1, 4)]),
        "sub": (ad.sub, [rnd(2, 3, 4), rnd(4)]),
        "hadamard": (ad.mul, [rnd(3, 4), rnd(3, 1)]),
        "div": (ad.div, [rnd(3, 4), pos(3, 4)]),
        "matmul": (ad.matmul, [rnd(2, 3, 4), rnd(4, 2)]),
        "cross": (ad.cross, [rnd(4, 3), rnd(4, 3)]),
        "exp": (ad.exp, [rnd(3, 2)]),
        "log": (ad.log, [pos(3, 2)]),
        "sqrt": (ad.sqrt, [pos(3, 2)]),
        "sin": (ad.sin, [rnd(6)]),
        "cos": (ad.cos, [rnd(6)]),
        "tanh": (ad.tanh, [rnd(3, 3)]),
        "sigmoid": (ad.sigmoid, [rnd(3, 3)]),
        "relu": (ad.relu, [rng.choice([-1.0, 1.0], (4, 4)) * pos(4, 4)]),
        "sum": (lambda a: ad.sum(a, axis=1), [rnd(3, 4, 2)]),
        "mean": (lambda a: ad.mean(a, axis=-1), [rnd(3, 5)]),
        "max": (lambda a: ad.max(a, axis=0), [rnd(5, 4)]),
        "cumsum": (lambda a: ad.cumsum(a, axis=0), [rnd(6, 2)]),
        "reshape": (lambda a: ad.reshape(a, (6, 2)), [rnd(3, 4)]),
        "transpose": (lambda a: ad.transpose(a, (2, 0, 1)), [rnd(2, 3, 4)]),
        "slice": (lambda a: a[1:, ::2], [rnd(4, 5)]),
        "concat": (lambda a, b: ad.concat([a, b], axis=1), [rnd(2, 3), rnd(2, 2)]),
        "stack": (lambda a, b: ad.stack([a, b], axis=1), [rnd(2, 3), rnd(2, 3)]),
        "softmax": (lambda a: ad.softmax(a, axis=-1), [rnd(3, 5)]),
        "layer_norm": (ad.layer_norm, [rnd(4, 8), rnd(8), rnd(8)]),
        "dropout": (lambda a: ad.dropout(a, 0.3, True, ad.DropoutStream(7)), [rnd(4, 6)]),
        "gather_rows": (lambda a: ad.gather_rows(a, idx, axis=1), [rnd(2, 4, 3)]),
        "scatter_add_rows": (lambda a: ad.scatter_add_rows(a, idx, 4, axis=1), [rnd(2, 5, 3)]),
        "segment_max": (lambda a: ad.segment_max(a, [0, 0, 1, 1, 1], 2, axis=1)[0], [rnd(2, 5, 3)]),
    }


class FrozenStraightThrough(Module):
    """Differentiable stand-in for a trained RVQ around the point ``pre0``.

    ``pre + (q0 - pre0)`` and ``mean((pre - q0)^2)`` build the same graph as
    the real straight-through pass, so their analytic gradients coincide,
    while their values vary smoothly for finite differences.
    """

    def __init__(self, rvq, pre0):
        super().__init__()
        pre0 = np.asarray(pre0, dtype=np.float64)
        _, q, _ = rvq.quantize(pre0.reshape(-1, rvq.latent_dim))
        self.q0 = q.reshape(pre0.shape)
        self.offset = self.q0 - pre0

    def forward(self, pre, rng=None):
        pre = ad.as_tensor(pre)
        out = ad.add(pre, ad.Tensor(self.offset, dtype=pre.dtype))
        commit = ad.mean(ad.square(ad.sub(pre, ad.Tensor(self.q0, dtype=pre.dtype))))
        return out, {"commit": commit}


def _param_grads(model, loss):
    model.zero_grad()
    loss().backward()
    return {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in model.named_parameters()}


def toy_batch(seed=0, T=8, d_text=4):
    """A 3-joint, ``T``-frame batch for composite gradient checks."""
    from .graphrepr import extract_dynamics
    from .model import sequence_batch
    from .rotations import quat_normalize
    from .semantics import HashEmbedding, embed
    from .skeleton import Joint, MotionClip, Skeleton

    rng = np.random.default_rng(seed)
    rot = ("Zrotation", "Xrotation", "Yrotation")
    sk = Skeleton((Joint("Hips", None, (0.0, 0.0, 0.0), ("Xposition", "Yposition", "Zposition") + rot),
                   Joint("LeftUpLeg", 0, (0.1, -0.4, 0.0), rot),
                   Joint("LeftFoot", 1, (0.0, -0.4, 0.05), rot)))
    q = quat_normalize(np.array([1.0, 0, 0, 0]) + 0.2 * rng.standard_normal((T, 3, 4)))
    root = np.cumsum(np.tile([0.02, 0.0, 0.03], (T, 1)), 0) + [0, 0.8, 0]
    clip = MotionClip(sk, 1 / 30, root, q)
    emb = embed(["pelvis", "left thigh", "left foot"], HashEmbedding(d_text))
    return sequence_batch([extract_dynamics(clip, embeddings=emb)])


def toy_config(bottleneck="vae", **kw):
    from .model import ModelConfig

    base = dict(hidden=8, heads=2, dropout=0.0, ff_inner=8, blocks_per_side=1, d_text=4, bottleneck=bottleneck,
                latent_dim=4, quantizers=2, codebook_size=4, window=8, overlap=2)
    base.update(kw)
    return ModelConfig(**base)


def block_checks(seed=0, max_per_param=None):
    """``[(name, rel_error, tol)]`` for each composite block and the full loss."""
    from .model import SATA, SeAM, SpatialBlock, TemporalBlock
    from .training import LossWeights, total_loss

    out = []
    rng = np.random.default_rng(seed)
    batch = toy_batch(seed)
    T, N = batch.n_frames, batch.n_nodes
    h = 1e-5
    pick = np.random.default_rng(seed + 1)

    with default_dtype(np.float64):
        seam = SeAM(5, 8, 4, 8, rng)
        x = rng.standard_normal((T, N, 5))
        out.append(("seam", gradcheck.check_module(
            lambda: _wsum(seam(x, batch.X_g, batch.X_l, batch.X_t)), seam, h, max_per_param=max_per_param,
            rng=pick), BLOCK_TOL))
        r = gradcheck.check(lambda t: _wsum(seam(t, batch.X_g, batch.X_l, batch.X_t)), [x], h=h)
        out.append(("seam_input", r.max_rel_error, BLOCK_TOL))

        sp = SpatialBlock(8, 2, 0.0, rng)
        H = rng.standard_normal((T, N, 8))
        out.append(("spatial", gradcheck.check_module(lambda: _wsum(sp(ad.Tensor(H), batch)), sp, h,
                                                       max_per_param=max_per_param, rng=pick), BLOCK_TOL))
        tb = TemporalBlock(8, 2, 8, 0.0, rng)
        out.append(("temporal", gradcheck.check_module(lambda: _wsum(tb(ad.Tensor(H))), tb, h,
                                                        max_per_param=max_per_param, rng=pick), BLOCK_TOL))

        from .model import VAEBottleneck

        vae = VAEBottleneck(4)
        eps_rng = lambda: np.random.default_rng(3)  # noqa: E731
        r = gradcheck.check(lambda p: _wsum(vae(p, eps_rng())[0]), [rng.standard_normal((T, 1, 8))], h=h)
        out.append(("vae_head", r.max_rel_error, BLOCK_TOL))

        from .model import RVQBottleneck

        rvq = RVQBottleneck(4, 2, 4, seed=seed)
        rvq.train()
        pre0 = rng.standard_normal((T, 1, 4))
        rvq(ad.Tensor(pre0))
        rvq.eval()
        # the quantized forward value is piecewise constant, so differences are
        # taken on the straight-through surrogate with the offset frozen at pre0
        st = FrozenStraightThrough(rvq, pre0)
        real = gradcheck.check(lambda p: _wsum(rvq(p)[0]), [pre0], h=h)
        sur = gradcheck.check(lambda p: _wsum(st(p)[0]), [pre0], h=h)
        w = np.random.default_rng(pre0.size).standard_normal(pre0.shape)
        st_err = max(sur.max_rel_error, float(np.abs(real.analytic[0] - sur.analytic[0]).max()),
                     float(np.abs(real.analytic[0] - w).max()))
        out.append(("rvq_straight_through", st_err, BLOCK_TOL))
        real = gradcheck.check(lambda p: rvq(p)[1]["commit"], [pre0], h=h)
        sur = gradcheck.check(lambda p: st(p)[1]["commit"], [pre0], h=h)
        err = max(real.max_rel_error, sur.max_rel_error, float(np.abs(real.analytic[0] - sur.analytic[0]).max()))
        out.append(("rvq_commit", err, BLOCK_TOL))

        for bn in ("vae", "rvq"):
            model = SATA(toy_config(bn))
            model.astype(np.float64)
            model.train()
            if bn == "rvq":
                model(batch)  # initialize the codebooks, then freeze them
                model.bottleneck.eval()

            def loss():
                return total_loss(model, batch, LossWeights(), rng=np.random.default_rng(1))[0]

            if bn == "vae":
                out.append(("full_loss_vae", gradcheck.check_module(loss, model, h, max_per_param=max_per_param,
                                                                    rng=pick), DEEP_TOL))
                continue
            real = _param_grads(model, loss)
            with ad.no_grad():
                pre0 = model.encode(batch).data
            rvq = model.bottleneck
            model.bottleneck = FrozenStraightThrough(rvq, pre0)
            try:
                sur = _param_grads(model, loss)
                gap = max(float(np.abs(real[k] - sur[k]).max()) for k in real)
                err = gradcheck.check_module(loss, model, h, max_per_param=max_per_param, rng=pick)
            finally:
                model.bottleneck = rvq
            out.append(("full_loss_rvq", max(err, gap), DEEP_TOL))
    return out


def gradcheck_suite(quick=False, seed=0):
    rows = []
    rng = np.random.default_rng(seed)
    for name, (fn, inputs) in op_cases(rng).items():
        res = gradcheck.check(lambda *t, f=fn: _wsum(f(*t)), inputs, h=1e-3, name=name)
        rows.append({"name": f"op:{name}", "max_rel_error": res.max_rel_error, "tol": OP_TOL})
    for name, err, tol in block_checks(seed, max_per_param=4 if quick else 12):
        rows.append({"name": f"block:{name}", "max_rel_error": float(err), "tol": tol})
    for r in rows:
        r["passed"] = bool(r["max_rel_error"] < r["tol"])
    return rows


def roundtrip_report(files, units="auto", tags_path=None):
    """Per-file BVH and representation round-trip errors."""
    from .bvh import parse_bvh, read_bvh, write_bvh
    from .graphrepr import extract_dynamics, recover_motion
    from .kinematics import canonicalize, clip_positions
    from .rotations import geodesic_angle

    rows = []
    for f in files:
        sk, clip = read_bvh(f, units=units)
        _, again = parse_bvh(write_bvh(sk, clip), units="m")
        bvh_err = float(np.abs(clip_positions(again) - clip_positions(clip)).max())
        canon = canonicalize(clip)
        rec = recover_motion(extract_dynamics(canon).targets, sk, clip.frame_time).clip
        pos_err = float(np.abs(clip_positions(rec) - clip_positions(canon)).max())
        rot_err = float(geodesic_angle(rec.rotations, canon.rotations).max())
        rows.append({"file": str(f), "bvh_position_error_m": bvh_err, "repr_position_error_m": pos_err,
                     "repr_rotation_error_rad": rot_err,
                     "passed": bvh_err < 1e-5 and pos_err < 1e-4 and rot_err < 1e-4})
    return rows
