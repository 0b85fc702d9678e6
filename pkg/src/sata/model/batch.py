"""Disjoint-union batching of heterogeneous skeleton windows."""

from dataclasses import dataclass

import numpy as np

from ..errors import CrossGraphEdge, DimensionMismatch, ShapeMismatch
from ..graphrepr import C, FEATURE_DIM, OUTPUT_DIM, R, VQ, VX, build_static


@dataclass
class GraphBatch:
    """Several skeleton windows of equal length stacked along the node axis.

    Arrays indexed by node have ``N`` rows (all graphs concatenated); edges
    use global node indices.  ``features`` is ``T x N x 23`` and ``targets``
    ``T x N x 11``.
    """

    features: np.ndarray
    targets: np.ndarray
    X_g: np.ndarray
    X_l: np.ndarray
    X_t: np.ndarray
    edges: np.ndarray
    edge_feat: np.ndarray
    graph_id: np.ndarray
    n_graphs: int
    roots: np.ndarray
    parents: np.ndarray
    offsets: np.ndarray
    depth: np.ndarray
    contact: np.ndarray
    heights: np.ndarray
    ground: np.ndarray
    frame_time: float
    node_counts: tuple

    @property
    def n_nodes(self):
        return len(self.graph_id)

    @property
    def n_frames(self):
        return self.features.shape[0]

    def attention_mask(self):
        """Additive ``N x N`` mask keeping attention inside each graph."""
        same = self.graph_id[:, None] == self.graph_id[None, :]
        return np.where(same, 0.0, -1e9).astype(np.float32)

    def split(self, arr, axis=1):
        """Split a node-indexed array into per-graph pieces."""
        return np.split(arr, np.cumsum(self.node_counts)[:-1], axis=axis)


def window_arrays(seq, start, length):
    """``(features, targets)`` for ``[start, start+length)`` of a sequence.

    Frames past the clip end repeat the last frame with all velocity
    channels (``v_q``, ``v_x`` and the root velocities) set to zero.
    """
    f = seq.features
    T = f.shape[0]
    if start < 0 or start >= T or length < 1:
        raise ShapeMismatch(f"window [{start}, {start + length}) outside a {T}-frame clip")
    end = min(start + length, T)
    win = f[start:end]
    if end - start < length:
        pad = np.repeat(f[T - 1:T], length - (end - start), axis=0)
        pad[..., VQ] = 0.0
        pad[..., VX] = 0.0
        pad[..., R.start:R.start + 3] = 0.0
        win = np.concatenate([win, pad], axis=0)
    tgt = np.concatenate([win[..., 0:6], win[..., R], win[..., C:C + 1]], axis=-1)
    return win, tgt


def collate(items):
    """Build a :class:`GraphBatch` from ``(sequence, features, targets)`` triples.

    Every window must have the same number of frames.
    """
    if not items:
        raise ShapeMismatch("cannot collate an empty batch")
    T = items[0][1].shape[0]
    feats, tgts, xg, xl, xt, edges, ef, gid, roots, parents, offs, depth, contact, heights, grounds, counts = \
        ([] for _ in range(16))
    offset = 0
    d_text = items[0][0].statics.X_t.shape[1]
    for b, (seq, f, t) in enumerate(items):
        J = seq.n_joints
        if f.shape != (T, J, FEATURE_DIM) or t.shape != (T, J, OUTPUT_DIM):
            raise DimensionMismatch(f"window {b} has shapes {f.shape}/{t.shape}; expected T={T}, J={J}")
        if seq.statics.X_t.shape[1] != d_text:
            raise DimensionMismatch("all skeletons in a batch need the same embedding width")
        feats.append(f)
        tgts.append(t)
        xg.append(seq.statics.X_g)
        xl.append(seq.statics.X_l)
        xt.append(seq.statics.X_t)
        e = np.asarray(seq.edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= J):
            raise CrossGraphEdge(f"window {b} has an edge outside its own {J} nodes")
        edges.append(e + offset)
        ef.append(seq.edge_features.as_array())
        gid.append(np.full(J, b, dtype=np.int64))
        roots.append(offset)
        p = seq.skeleton.parents.copy()
        p[p >= 0] += offset
        parents.append(p)
        offs.append(seq.skeleton.offsets)
        depth.append(seq.skeleton.depth_table())
        m = np.zeros(J, dtype=bool)
        m[seq.contact_joints] = True
        contact.append(m)
        heights.append(seq.character_height)
        grounds.append(seq.ground_level)
        counts.append(J)
        offset += J
    f32 = np.float32
    return GraphBatch(
        features=np.concatenate(feats, axis=1).astype(f32),
        targets=np.concatenate(tgts, axis=1).astype(f32),
        X_g=np.concatenate(xg).astype(f32),
        X_l=np.concatenate(xl).astype(f32),
        X_t=np.concatenate(xt).astype(f32),
        edges=np.concatenate(edges).astype(np.int64),
        edge_feat=np.concatenate(ef).astype(f32),
        graph_id=np.concatenate(gid),
        n_graphs=len(items),
        roots=np.array(roots, dtype=np.int64),
        parents=np.concatenate(parents),
        offsets=np.concatenate(offs).astype(f32),
        depth=np.concatenate(depth),
        contact=np.concatenate(contact),
        heights=np.array(heights, dtype=f32),
        ground=np.array(grounds, dtype=f32),
        frame_time=float(items[0][0].frame_time),
        node_counts=tuple(counts),
    )


def check_edges(edges, graph_id):
    """Raise ``CrossGraphEdge`` if any edge joins two different graphs."""
    edges = np.asarray(edges).reshape(-1, 2)
    bad = graph_id[edges[:, 0]] != graph_id[edges[:, 1]]
    if np.any(bad):
        raise CrossGraphEdge(f"{int(bad.sum())} edge(s) cross graph boundaries, first {edges[bad][0].tolist()}")


def sequence_batch(seqs, length=None):
    """Whole sequences (equal length) as one batch; used at inference."""
    items = []
    for s in seqs:
        n = s.n_frames if length is None else length
        f, t = window_arrays(s, 0, n)
        items.append((s, f, t))
    return collate(items)


def static_batch(skeleton, embeddings, n_frames, contact_joints=()):
    """Single-graph batch carrying only target statics (for decoding)."""
    edges, ef, st = build_static(skeleton, embeddings)
    J = len(skeleton)
    f32 = np.float32
    contact = np.zeros(J, dtype=bool)
    contact[np.asarray(contact_joints, dtype=np.int64)] = True
    return GraphBatch(
        features=np.zeros((n_frames, J, FEATURE_DIM), f32),
        targets=np.zeros((n_frames, J, OUTPUT_DIM), f32),
        X_g=st.X_g.astype(f32), X_l=st.X_l.astype(f32), X_t=st.X_t.astype(f32),
        edges=edges, edge_feat=ef.as_array().astype(f32),
        graph_id=np.zeros(J, dtype=np.int64), n_graphs=1, roots=np.array([0]),
        parents=skeleton.parents, offsets=skeleton.offsets.astype(f32), depth=skeleton.depth_table(),
        contact=contact, heights=np.array([skeleton.height()], f32), ground=np.zeros(1, f32), frame_time=1.0, node_counts=(J,),
    )
