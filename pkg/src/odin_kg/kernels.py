"""Hot loops over the CSR edge arrays of a snapshot.

Each kernel has two implementations with identical results: a numba-compiled
loop (``*_jit``) and a numpy path (``*_np``). The public names are bound to one
of them at import time according to :data:`odin_kg._accel.USE_NUMBA`.

Array conventions: ``indptr`` has length ``n + 1`` and the out-edges of entity
``u`` are triple indices ``indptr[u]:indptr[u + 1]``; ``targets[t]`` is the
object entity of triple ``t``.
"""

import heapq

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "local_push",
    "two_paths",
    "expand_frontier",
    "enumerate_paths",
    "USE_NUMBA",
]


# ---------------------------------------------------------------------------
# Personalized PageRank local push
# ---------------------------------------------------------------------------


def _push_body(indptr, targets, seeds, alpha, eps):
    n = indptr.shape[0] - 1
    ns = seeds.shape[0]
    p = np.zeros(n)
    r = np.zeros(n)
    is_seed = np.zeros(n, np.bool_)
    in_heap = np.zeros(n, np.bool_)
    for s in seeds:
        r[s] += 1.0 / ns
        is_seed[s] = True

    scale = 1.0
    while True:
        heap = [np.int64(0)]
        heap.pop()
        for u in range(n):
            deg = indptr[u + 1] - indptr[u]
            if r[u] > 0.0 and r[u] >= scale * eps * max(deg, 1):
                heap.append(np.int64(u))
                in_heap[u] = True
        heapq.heapify(heap)

        while len(heap) > 0:
            u = heapq.heappop(heap)
            in_heap[u] = False
            lo = indptr[u]
            hi = indptr[u + 1]
            deg = hi - lo
            ru = r[u]
            r[u] = 0.0
            # mass that comes straight back to u is summed geometrically
            if deg > 0:
                loops = 0
                for k in range(lo, hi):
                    if targets[k] == u:
                        loops += 1
                stay = loops / deg
            elif is_seed[u]:
                stay = 1.0 / ns
            else:
                stay = 0.0
            mass = ru / (alpha + (1.0 - alpha) * (1.0 - stay))
            p[u] += alpha * mass
            if deg > 0:
                share = (1.0 - alpha) * mass / deg
                for k in range(lo, hi):
                    v = targets[k]
                    if v == u:
                        continue
                    r[v] += share
                    dv = indptr[v + 1] - indptr[v]
                    if not in_heap[v] and r[v] >= scale * eps * max(dv, 1):
                        heapq.heappush(heap, np.int64(v))
                        in_heap[v] = True
            else:
                # dangling: walk restarts from the seed distribution
                share = (1.0 - alpha) * mass / ns
                for v in seeds:
                    if v == u:
                        continue
                    r[v] += share
                    dv = indptr[v + 1] - indptr[v]
                    if not in_heap[v] and r[v] >= scale * eps * max(dv, 1):
                        heapq.heappush(heap, np.int64(v))
                        in_heap[v] = True

        # every entity's error is bounded by the total leftover residual
        if r.sum() <= eps:
            break
        scale *= 0.5
    return p


_push_jit = njit(_push_body)


def _push_np(indptr, targets, seeds, alpha, eps):
    # Pop order decides the result, so this stays sequential; same arithmetic
    # as _push_body but on Python lists, which avoids numpy scalar overhead.
    indptr = np.asarray(indptr).tolist()
    targets = np.asarray(targets).tolist()
    seeds = np.asarray(seeds).tolist()
    alpha = float(alpha)
    eps = float(eps)
    n = len(indptr) - 1
    ns = len(seeds)
    deg = [max(indptr[u + 1] - indptr[u], 1) for u in range(n)]
    p = [0.0] * n
    r = [0.0] * n
    is_seed = [False] * n
    in_heap = [False] * n
    for s in seeds:
        r[s] += 1.0 / ns
        is_seed[s] = True
    pop, push = heapq.heappop, heapq.heappush

    scale = 1.0
    while True:
        heap = [u for u in range(n) if r[u] > 0.0 and r[u] >= scale * eps * deg[u]]
        for u in heap:
            in_heap[u] = True
        while heap:
            u = pop(heap)
            in_heap[u] = False
            lo = indptr[u]
            hi = indptr[u + 1]
            d = hi - lo
            ru = r[u]
            r[u] = 0.0
            if d > 0:
                stay = targets[lo:hi].count(u) / d
            elif is_seed[u]:
                stay = 1.0 / ns
            else:
                stay = 0.0
            mass = ru / (alpha + (1.0 - alpha) * (1.0 - stay))
            p[u] += alpha * mass
            if d > 0:
                share = (1.0 - alpha) * mass / d
                out = targets[lo:hi]
            else:
                share = (1.0 - alpha) * mass / ns
                out = seeds
            for v in out:
                if v == u:
                    continue
                r[v] += share
                if not in_heap[v] and r[v] >= scale * eps * deg[v]:
                    push(heap, v)
                    in_heap[v] = True
        if np.sum(r) <= eps:
            break
        scale *= 0.5
    return np.array(p)


# ---------------------------------------------------------------------------
# Two-edge walks x -> y -> z (rule bodies)
# ---------------------------------------------------------------------------


@njit
def _two_paths_jit(indptr, targets):
    m = targets.shape[0]
    total = 0
    for t in range(m):
        y = targets[t]
        total += indptr[y + 1] - indptr[y]
    first = np.empty(total, np.int64)
    second = np.empty(total, np.int64)
    k = 0
    for t in range(m):
        y = targets[t]
        for t2 in range(indptr[y], indptr[y + 1]):
            first[k] = t
            second[k] = t2
            k += 1
    return first, second


def _two_paths_np(indptr, targets):
    deg = np.diff(indptr)
    cnt = deg[targets]
    total = int(cnt.sum())
    first = np.repeat(np.arange(targets.shape[0], dtype=np.int64), cnt)
    offsets = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    second = np.repeat(indptr[targets].astype(np.int64), cnt) + offsets
    return first, second


# ---------------------------------------------------------------------------
# One-hop frontier expansion for beam search
# ---------------------------------------------------------------------------


@njit
def _expand_jit(indptr, targets, path_entities, allow_revisit):
    n_paths, width = path_entities.shape
    last = width - 1
    total = 0
    for i in range(n_paths):
        u = path_entities[i, last]
        for t in range(indptr[u], indptr[u + 1]):
            v = targets[t]
            ok = True
            if not allow_revisit:
                for j in range(width):
                    if path_entities[i, j] == v:
                        ok = False
                        break
            if ok:
                total += 1
    parent = np.empty(total, np.int64)
    triple = np.empty(total, np.int64)
    k = 0
    for i in range(n_paths):
        u = path_entities[i, last]
        for t in range(indptr[u], indptr[u + 1]):
            v = targets[t]
            ok = True
            if not allow_revisit:
                for j in range(width):
                    if path_entities[i, j] == v:
                        ok = False
                        break
            if ok:
                parent[k] = i
                triple[k] = t
                k += 1
    return parent, triple


def _expand_np(indptr, targets, path_entities, allow_revisit):
    n_paths = path_entities.shape[0]
    ends = path_entities[:, -1]
    cnt = (indptr[ends + 1] - indptr[ends]).astype(np.int64)
    total = int(cnt.sum())
    parent = np.repeat(np.arange(n_paths, dtype=np.int64), cnt)
    offsets = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    triple = np.repeat(indptr[ends].astype(np.int64), cnt) + offsets
    if not allow_revisit and total:
        nxt = targets[triple]
        seen = (path_entities[parent] == nxt[:, None]).any(axis=1)
        parent = parent[~seen]
        triple = triple[~seen]
    return parent, triple


# ---------------------------------------------------------------------------
# Exhaustive path enumeration (oracle)
# ---------------------------------------------------------------------------


@njit
def _dfs_jit(indptr, targets, seeds, h, allow_revisit, count_only, out, lengths):
    # iterative depth-first search; out[k, :len] holds triple indices of path k
    stack_ent = np.empty(h + 1, np.int64)
    stack_tri = np.empty(h, np.int64)
    cursor = np.empty(h + 1, np.int64)
    k = 0
    for s in seeds:
        depth = 0
        stack_ent[0] = s
        cursor[0] = indptr[s]
        while depth >= 0:
            u = stack_ent[depth]
            if depth == h or cursor[depth] >= indptr[u + 1]:
                depth -= 1
                continue
            t = cursor[depth]
            cursor[depth] += 1
            v = targets[t]
            if not allow_revisit:
                dup = False
                for j in range(depth + 1):
                    if stack_ent[j] == v:
                        dup = True
                        break
                if dup:
                    continue
            stack_tri[depth] = t
            if not count_only:
                for j in range(depth + 1):
                    out[k, j] = stack_tri[j]
                lengths[k] = depth + 1
            k += 1
            depth += 1
            stack_ent[depth] = v
            cursor[depth] = indptr[v]
    return k


def _enumerate_jit(indptr, targets, seeds, h, allow_revisit):
    dummy = np.empty((0, h), np.int64)
    dummy_len = np.empty(0, np.int64)
    total = _dfs_jit(indptr, targets, seeds, h, allow_revisit, True, dummy, dummy_len)
    out = np.full((total, h), -1, np.int64)
    lengths = np.empty(total, np.int64)
    _dfs_jit(indptr, targets, seeds, h, allow_revisit, False, out, lengths)
    return _split_by_length(out, lengths, h)


def _enumerate_np(indptr, targets, seeds, h, allow_revisit):
    # level-synchronous expansion; order is canonicalised afterwards
    subj_of_seed = np.asarray(seeds, dtype=np.int64)[:, None]
    ents = subj_of_seed
    tris = np.empty((len(seeds), 0), np.int64)
    levels = []
    for _ in range(h):
        parent, triple = _expand_np(indptr, targets, ents, allow_revisit)
        tris = np.hstack([tris[parent], triple[:, None]])
        ents = np.hstack([ents[parent], targets[triple][:, None]])
        levels.append(_canonical(tris))
        if not len(triple):
            for _ in range(h - len(levels)):
                levels.append(np.empty((0, len(levels) + 1), np.int64))
            break
    return levels


def _split_by_length(out, lengths, h):
    return [_canonical(out[lengths == L, :L]) for L in range(1, h + 1)]


def _canonical(tris):
    if tris.shape[0] == 0:
        return tris.astype(np.int64)
    order = np.lexsort(tris.T[::-1])
    return np.ascontiguousarray(tris[order], dtype=np.int64)


if USE_NUMBA:
    local_push = _push_jit
    two_paths = _two_paths_jit
    expand_frontier = _expand_jit
    enumerate_paths = _enumerate_jit
else:
    local_push = _push_np
    two_paths = _two_paths_np
    expand_frontier = _expand_np
    enumerate_paths = _enumerate_np
