"""Active-set polishing: exact coefficient re-optimization with the feature
selection frozen.

Given a feasible model, only its nonzero coefficients (and the intercept)
are re-optimized; every other coefficient stays zero. Dropping penalties,
the restricted problem minimizes the weighted 0-1 loss alone; ties are
resolved by (smaller coefficient-magnitude sum, lexicographically smaller
coefficient tuple, then the intercept of smallest magnitude with negative
preferred). The data is first projected onto the active columns, which
collapses it to at most 2^|A| distinct patterns per class, so the search
is fast even when the original dataset is large.

The search prunes with a grouped relaxation that is tighter than the
per-pattern interval bound of the main solver: patterns sharing the same
mask over the still-free coefficients receive one shared unknown offset,
so each mask group contributes the sliding-window minimum of its exact
loss curve. Conflicting label pairs always share a group and are costed
exactly by the curve itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import AggregatedDataset
from .model import LatticeSpec, PenaltyConfig, ScoringSystem, objective

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is optional
    njit = None


@dataclass(frozen=True)
class ActiveSet:
    """Sorted 0-based feature positions carrying nonzero coefficients."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(sorted(int(j) for j in self.indices))
        if len(set(idx)) != len(idx):
            raise ValueError("active set indices must be distinct")
        if idx and idx[0] < 0:
            raise ValueError("active set indices must be nonnegative")
        object.__setattr__(self, "indices", idx)

    @staticmethod
    def of(model: ScoringSystem) -> "ActiveSet":
        return ActiveSet(tuple(j for j, _ in model.terms))

    def __len__(self):
        return len(self.indices)


def project_active(agg: AggregatedDataset, active: ActiveSet) -> AggregatedDataset:
    """Restrict patterns to the active columns and re-aggregate.

    Models supported on the active set score identically before and after,
    so their weighted loss is preserved exactly.
    """
    cols = list(active.indices)

    def collapse(patterns, counts):
        proj = patterns[:, cols] if len(patterns) else patterns.reshape(0, len(cols))
        if len(proj) == 0:
            return (np.empty((0, len(cols)), dtype=np.uint8),
                    np.empty(0, dtype=np.int64))
        if proj.shape[1] == 0:
            return (np.zeros((1, 0), dtype=np.uint8),
                    np.array([counts.sum()], dtype=np.int64))
        uniq, inverse = np.unique(proj, axis=0, return_inverse=True)
        summed = np.bincount(inverse.ravel(), weights=counts,
                             minlength=len(uniq)).astype(np.int64)
        return uniq.astype(np.uint8), summed

    pos_p, pos_c = collapse(agg.pos_patterns, agg.pos_counts)
    neg_p, neg_c = collapse(agg.neg_patterns, agg.neg_counts)
    neg_index = {row.tobytes(): t for t, row in enumerate(neg_p)}
    pairs = [(s, neg_index[row.tobytes()])
             for s, row in enumerate(pos_p) if row.tobytes() in neg_index]
    return AggregatedDataset(pos_p, pos_c, neg_p, neg_c,
                             np.array(pairs, dtype=np.int64).reshape(-1, 2),
                             agg.source_n)


def _sliding_min(rows: np.ndarray, w: int) -> np.ndarray:
    """Minimum over every length-w window along axis 1 (van Herk)."""
    if w == 1:
        return rows
    g, t = rows.shape
    nblocks = -(-t // w)
    pad = nblocks * w - t
    if pad:
        rows = np.concatenate([rows, np.full((g, pad), np.inf)], axis=1)
    blocks = rows.reshape(g, nblocks, w)
    pref = np.minimum.accumulate(blocks, axis=2).reshape(g, -1)
    suff = np.minimum.accumulate(blocks[:, :, ::-1], axis=2)[:, :, ::-1].reshape(g, -1)
    idx = np.arange(t - w + 1)
    return np.minimum(suff[:, idx], pref[:, idx + w - 1])


if njit is not None:
    _INF = np.int64(1) << 62

    @njit(cache=True)
    def _grouped_bound_jit(base, is_pos, units, inverse, half, l0b, pad):  # pragma: no cover
        n_groups = half.shape[0]
        span = l0b + pad
        t_len = 2 * span + 1
        grid_len = 2 * l0b + 1
        cp = np.zeros((n_groups, t_len), np.int64)
        cn = np.zeros((n_groups, t_len), np.int64)
        for i in range(base.shape[0]):
            g = inverse[i]
            if is_pos[i]:
                idx = -base[i] + span
                if idx >= t_len:
                    idx = t_len - 1
                if idx >= 0:
                    cp[g, idx] += units[i]
            else:
                idx = 1 - base[i] + span
                if idx <= t_len - 1:
                    if idx < 0:
                        idx = 0
                    cn[g, idx] += units[i]

        profile = np.zeros(grid_len, np.int64)
        curve = np.empty(t_len, np.int64)
        scratch = t_len + 2 * pad + 2
        pref = np.empty(scratch, np.int64)
        suff = np.empty(scratch, np.int64)
        for g in range(n_groups):
            acc = np.int64(0)
            for t in range(t_len - 1, -1, -1):
                acc += cp[g, t]
                curve[t] = acc
            acc = np.int64(0)
            for t in range(t_len):
                acc += cn[g, t]
                curve[t] += acc

            s = half[g]
            start = pad - s
            if s == 0:
                for q in range(grid_len):
                    profile[q] += curve[start + q]
                continue
            w = 2 * s + 1
            nb = (t_len + w - 1) // w
            padded = nb * w
            for t in range(padded):
                v = curve[t] if t < t_len else _INF
                pref[t] = v if t % w == 0 else min(pref[t - 1], v)
            for t in range(padded - 1, -1, -1):
                v = curve[t] if t < t_len else _INF
                suff[t] = v if (t % w == w - 1 or t == padded - 1) else min(suff[t + 1], v)
            for q in range(grid_len):
                i0 = start + q
                lo = suff[i0]
                hi = pref[i0 + w - 1]
                profile[q] += lo if lo < hi else hi
        best = profile[0]
        for q in range(1, grid_len):
            if profile[q] < best:
                best = profile[q]
        return best

    @njit(cache=True)
    def _search_jit(pats, units, is_pos, order, values, nvalues, inverse_mat,
                    half_flat, half_off, pads, l0b,
                    best_units, best_l1, best_coef, best_lam0):  # pragma: no cover
        """Full depth-first search over the active coefficients.

        Mirrors the pure-Python recursion exactly: one grouped bound per
        interior node, an intercept scan per leaf, incumbent ordered by
        (loss units, l1, coefficient tuple) with the canonical intercept.
        """
        k = order.shape[0]
        n_rows = pats.shape[0]
        base = np.zeros(n_rows, np.int64)
        coef = np.zeros(k, np.int64)
        l1_stack = np.zeros(k + 1, np.int64)
        vptr = np.zeros(k + 1, np.int64)
        applied = np.zeros(k, np.int64)
        has_applied = np.zeros(k, np.uint8)

        depth = 0
        while depth >= 0:
            j = order[depth]
            if has_applied[depth] == 1:
                v = applied[depth]
                if v != 0:
                    for i in range(n_rows):
                        base[i] -= v * pats[i, j]
                    coef[j] = 0
                has_applied[depth] = 0
            if vptr[depth] >= nvalues[j]:
                vptr[depth] = 0
                depth -= 1
                continue
            v = values[j, vptr[depth]]
            vptr[depth] += 1
            if v != 0:
                for i in range(n_rows):
                    base[i] += v * pats[i, j]
                coef[j] = v
            applied[depth] = v
            has_applied[depth] = 1
            l1_stack[depth + 1] = l1_stack[depth] + (v if v >= 0 else -v)

            if depth + 1 == k:
                u, lam0 = _leaf_best_jit(base, is_pos, units, l0b)
                l1 = l1_stack[k]
                better = False
                if u < best_units or (u == best_units and l1 < best_l1):
                    better = True
                elif u == best_units and l1 == best_l1:
                    for jj in range(k):
                        if coef[jj] != best_coef[jj]:
                            better = coef[jj] < best_coef[jj]
                            break
                if better:
                    best_units = u
                    best_l1 = l1
                    for jj in range(k):
                        best_coef[jj] = coef[jj]
                    best_lam0 = lam0
                continue

            d1 = depth + 1
            bound = _grouped_bound_jit(
                base, is_pos, units, inverse_mat[d1],
                half_flat[half_off[d1]:half_off[d1 + 1]], l0b, pads[d1])
            if bound > best_units or (bound == best_units
                                      and l1_stack[d1] > best_l1):
                continue
            depth = d1
        return best_units, best_l1, best_coef, best_lam0

    @njit(cache=True)
    def _leaf_best_jit(base, is_pos, units, l0b):  # pragma: no cover
        grid_len = 2 * l0b + 1
        cp = np.zeros(grid_len, np.int64)
        cn = np.zeros(grid_len, np.int64)
        for i in range(base.shape[0]):
            if is_pos[i]:
                idx = -base[i] + l0b
                if idx >= grid_len:
                    idx = grid_len - 1
                if idx >= 0:
                    cp[idx] += units[i]
            else:
                idx = 1 - base[i] + l0b
                if idx <= grid_len - 1:
                    if idx < 0:
                        idx = 0
                    cn[idx] += units[i]
        acc = np.int64(0)
        for t in range(grid_len - 1, -1, -1):
            acc += cp[t]
            cp[t] = acc
        acc = np.int64(0)
        for t in range(grid_len):
            acc += cn[t]
            cp[t] += acc
        # smallest magnitude first, negative before positive on ties
        best_units = cp[l0b]
        best_lam0 = 0
        for m in range(1, l0b + 1):
            for lam0 in (-m, m):
                u = cp[lam0 + l0b]
                if u < best_units:
                    best_units = u
                    best_lam0 = lam0
        return best_units, best_lam0


class _RestrictedSearch:
    """Branch and bound over the active coefficients of the projected data.

    Depth d fixes feature order[d]; the intercept is chosen by scanning its
    grid at every leaf. The incumbent key is (loss units, coefficient l1,
    coefficient tuple in position order), with the intercept canonicalized
    to smallest magnitude (negative first) among loss minimizers, so the
    result is independent of branching and value orders.
    """

    def __init__(self, proj: AggregatedDataset, cfg: PenaltyConfig,
                 bounds: np.ndarray, intercept_bound: int, seed_coefs):
        self.k = proj.p
        self.bounds = bounds.astype(np.int64)

        den = int(np.lcm(cfg.w_plus.denominator, cfg.w_minus.denominator))
        self.unit_den = den * proj.source_n
        n_pos, n_neg = len(proj.pos_counts), len(proj.neg_counts)
        self.pats = np.concatenate([proj.pos_patterns, proj.neg_patterns],
                                   axis=0).astype(np.int64) \
            if self.k else np.zeros((n_pos + n_neg, 0), dtype=np.int64)
        self.units = np.concatenate([proj.pos_counts * int(cfg.w_plus * den),
                                     proj.neg_counts * int(cfg.w_minus * den)])
        self.is_pos = np.zeros(n_pos + n_neg, dtype=bool)
        self.is_pos[:n_pos] = True

        total_span = int(self.bounds.sum())
        self.l0b = int(min(intercept_bound, total_span + 1))
        self.grid_len = 2 * self.l0b + 1
        self.lam0_grid = np.arange(-self.l0b, self.l0b + 1)
        self.lam0_pref = np.argsort(np.abs(self.lam0_grid) * 2
                                    + (self.lam0_grid > 0).astype(np.int64),
                                    kind="stable")

        self.base = np.zeros(len(self.pats), dtype=np.int64)
        self.coef = np.zeros(self.k, dtype=np.int64)

        # branch on widely shared features first so patterns decouple from
        # the free set quickly; value order only affects speed, not results
        coverage = [(-int((self.units * self.pats[:, j]).sum()), j) for j in range(self.k)]
        self.order = [j for _, j in sorted(coverage)]
        self.values = [
            sorted(range(-int(self.bounds[j]), int(self.bounds[j]) + 1),
                   key=lambda v, j=j: (abs(v - int(seed_coefs[j])), v))
            for j in range(self.k)
        ]

        # per-depth grouping by free-feature mask: membership, window sizes,
        # bucket row sets, and the loss-curve offset grid never change
        self.groups = []
        for d in range(self.k):
            free = self.order[d:]
            weights = 1 << np.arange(len(free), dtype=np.int64)
            masks = self.pats[:, free] @ weights
            gid, inverse = np.unique(masks, return_inverse=True)
            half = (np.bitwise_and.outer(gid, weights) > 0).astype(np.int64) \
                @ self.bounds[free]
            pad = int(half.max()) if len(half) else 0
            buckets = [(int(s), np.flatnonzero(half == s)) for s in np.unique(half)]
            self.groups.append({
                "inverse": np.ascontiguousarray(inverse.ravel(), dtype=np.int64),
                "half": np.ascontiguousarray(half, dtype=np.int64),
                "n_groups": len(gid),
                "buckets": buckets,
                "pad": pad,
                "t_lo": -(self.l0b + pad),
                "t_len": 2 * (self.l0b + pad) + 1,
            })

        if njit is not None and self.k:
            maxv = max(len(v) for v in self.values)
            self._values_mat = np.zeros((self.k, maxv), dtype=np.int64)
            self._nvalues = np.zeros(self.k, dtype=np.int64)
            for j, vals in enumerate(self.values):
                self._values_mat[j, :len(vals)] = vals
                self._nvalues[j] = len(vals)
            self._order_arr = np.array(self.order, dtype=np.int64)
            self._inverse_mat = np.stack([g["inverse"] for g in self.groups])
            halves = [g["half"] for g in self.groups]
            self._half_off = np.cumsum([0] + [len(h) for h in halves]).astype(np.int64)
            self._half_flat = np.concatenate(halves).astype(np.int64)
            self._pads = np.array([g["pad"] for g in self.groups], dtype=np.int64)

        self.best = None  # (units, l1, coef tuple, intercept)

    # -- loss curves -----------------------------------------------------------

    def _curves(self, grouping):
        """Exact loss-vs-offset curve per group: row g maps offset t to the
        units lost by g's members when every member score is base + t.
        Events clipped into the grid keep their meaning: an event beyond the
        high end is lost at every offset in range, one below at none."""
        inverse, n_groups = grouping["inverse"], grouping["n_groups"]
        t_lo, t_len = grouping["t_lo"], grouping["t_len"]
        width = t_len + 1  # one spill column for out-of-range events

        # positive rows lose when t <= -base, negative rows when t >= 1 - base
        pos_idx = np.clip(-self.base[self.is_pos] - t_lo, -1, t_len - 1)
        keep = pos_idx >= 0
        flat_pos = inverse[self.is_pos][keep] * width + pos_idx[keep]
        neg_idx = np.clip((1 - self.base[~self.is_pos]) - t_lo, 0, t_len)
        flat_neg = inverse[~self.is_pos] * width + neg_idx + n_groups * width

        flat = np.concatenate([flat_pos, flat_neg])
        w = np.concatenate([self.units[self.is_pos][keep], self.units[~self.is_pos]])
        hist = np.bincount(flat, weights=w, minlength=2 * n_groups * width)
        hist = hist.reshape(2, n_groups, width)

        pos_cum = np.cumsum(hist[0], axis=1)
        pos_suffix = pos_cum[:, -1:] - pos_cum + hist[0]  # sum of events >= t
        curves = pos_suffix[:, :t_len]
        curves += np.cumsum(hist[1], axis=1)[:, :t_len]
        return curves

    def _bound_units(self, depth) -> int:
        grouping = self.groups[depth]
        if njit is not None:
            return int(_grouped_bound_jit(self.base, self.is_pos, self.units,
                                          grouping["inverse"], grouping["half"],
                                          self.l0b, grouping["pad"]))
        curves = self._curves(grouping)
        pad = grouping["pad"]
        profile = np.zeros(self.grid_len)
        for s, rows_idx in grouping["buckets"]:
            window_min = _sliding_min(curves[rows_idx], 2 * s + 1)
            start = pad - s
            profile += window_min[:, start:start + self.grid_len].sum(axis=0)
        return int(profile.min())

    def _leaf_profile(self):
        grid_len = len(self.lam0_grid)
        # positive rows lose when lam0 <= -base, negative when lam0 >= 1 - base
        profile = np.zeros(grid_len + 1)
        idx = np.minimum(-self.base[self.is_pos] + self.l0b, grid_len - 1)
        keep = idx >= 0
        np.add.at(profile, idx[keep], self.units[self.is_pos][keep])
        profile = np.cumsum(profile[::-1])[::-1][:grid_len]
        neg = np.zeros(grid_len + 1)
        idx = np.clip((1 - self.base[~self.is_pos]) + self.l0b, 0, grid_len)
        np.add.at(neg, idx, self.units[~self.is_pos])
        profile += np.cumsum(neg)[:grid_len]
        return profile

    def _best_intercept(self):
        """(loss units, intercept) with the canonical intercept choice."""
        if njit is not None:
            units, lam0 = _leaf_best_jit(self.base, self.is_pos, self.units, self.l0b)
            return int(units), int(lam0)
        profile = self._leaf_profile()
        ordered = self.lam0_pref[np.argsort(profile[self.lam0_pref], kind="stable")]
        idx = int(ordered[0])
        return int(profile[idx]), int(self.lam0_grid[idx])

    def _leaf(self):
        units, lam0 = self._best_intercept()
        l1 = int(np.abs(self.coef).sum())
        key = (units, l1, tuple(int(c) for c in self.coef))
        if self.best is None or key < self.best[:3]:
            self.best = key + (lam0,)

    # -- search -----------------------------------------------------------------

    def _apply(self, j, v):
        if v:
            self.base += v * self.pats[:, j]
            self.coef[j] = v

    def _undo(self, j, v):
        if v:
            self.base -= v * self.pats[:, j]
            self.coef[j] = 0

    def seed(self, coefs):
        """Record the input coefficients, then coordinate-descend them to a
        local optimum; both end up as incumbents before the tree search."""
        for j, v in enumerate(coefs):
            self._apply(j, int(v))
        self._leaf()
        current = list(int(v) for v in coefs)
        improved = True
        while improved:
            improved = False
            for j in range(self.k):
                best_here = None
                for v in range(-int(self.bounds[j]), int(self.bounds[j]) + 1):
                    self._undo(j, current[j])
                    self._apply(j, v)
                    units, _ = self._best_intercept()
                    l1 = int(np.abs(self.coef).sum())
                    if best_here is None or (units, l1) < best_here[:2]:
                        best_here = (units, l1, v)
                    self._undo(j, v)
                    self._apply(j, current[j])
                if best_here[2] != current[j]:
                    self._undo(j, current[j])
                    self._apply(j, best_here[2])
                    current[j] = best_here[2]
                    improved = True
        self._leaf()
        for j in range(self.k - 1, -1, -1):
            self._undo(j, current[j])

    def run(self):
        if njit is not None and self.k:
            coefs = np.array(self.best[2], dtype=np.int64)
            units, l1, coefs, lam0 = _search_jit(
                self.pats, self.units, self.is_pos, self._order_arr,
                self._values_mat, self._nvalues, self._inverse_mat,
                self._half_flat, self._half_off, self._pads, self.l0b,
                self.best[0], self.best[1], coefs, self.best[3])
            self.best = (int(units), int(l1),
                         tuple(int(c) for c in coefs), int(lam0))
            return
        self._run_py(0, 0)

    def _run_py(self, depth, l1_fixed):
        if depth == self.k:
            self._leaf()
            return
        if self.best is not None and depth > 0:
            bound = self._bound_units(depth)
            if (bound, l1_fixed) > self.best[:2]:
                return  # no completion can beat the incumbent key
        j = self.order[depth]
        for v in self.values[j]:
            self._apply(j, v)
            self._run_py(depth + 1, l1_fixed + abs(v))
            self._undo(j, v)


def polish(model: ScoringSystem, agg: AggregatedDataset, cfg: PenaltyConfig,
           lattice: LatticeSpec, cap: int = 12):
    """Re-optimize the model's nonzero coefficients to proven optimality.

    Returns (polished ScoringSystem, its ObjectiveValue under cfg). The
    output support is contained in the input support and the objective
    never increases.
    """
    model.validate_lattice(lattice)
    active = ActiveSet.of(model)
    if len(active) > cap:
        raise ValueError(f"active set of size {len(active)} exceeds the polish cap {cap}")

    proj = project_active(agg, active)
    bounds = lattice.bounds_for(agg.p)[list(active.indices)]
    seed = [dict(model.terms)[j] for j in active.indices]
    search = _RestrictedSearch(proj, cfg, bounds, lattice.intercept_bound, seed)
    search.seed(seed)
    search.run()

    units, _, coefs, lam0 = search.best
    names = dict(zip((j for j, _ in model.terms), model.term_names))
    dense = np.zeros(agg.p, dtype=np.int64)
    for j, c in zip(active.indices, coefs):
        dense[j] = c
    all_names = [names.get(j, f"f{j}") for j in range(agg.p)]
    polished = ScoringSystem.from_dense(lam0, dense, all_names)
    return polished, objective(polished, agg, cfg)
