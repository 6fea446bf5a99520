"""Supplemental library: transcript shape and replayed values.

Runtime checks go through the VM's CLI; the 8-decimal summary format
bounds register comparisons at 1e-8, matrices are read back exactly.
"""

import math

import pytest

import ottrace as ot
from ottrace.core import TraceError

import cliharness as h
from cliharness import NA


def close(got, want, tol=1e-8):
    if want is NA:
        return got is NA
    if got is NA:
        return False
    return abs(got - want) <= tol


GRID = [1.5, -2.0, NA, 0.0,
        3.25, 7.0, -1.0, 2.5,
        0.5, NA, 4.0, -3.5]  # 4x3 row-major


def na_sum(vals):
    return NA if any(v is NA for v in vals) else math.fsum(vals)


def rows_of(cells, rows, cols):
    return [cells[r * cols:(r + 1) * cols] for r in range(rows)]


def cols_of(cells, rows, cols):
    return [cells[c::cols] for c in range(rows and cols)]


class TestAxisFolds:
    def run_fold(self, fn):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 4, 3)
            out = fn(x)
            dot = ot.emit(ctx)
        res = h.run(dot, {"x": (4, 3, GRID)})
        assert res["code"] == 0, res["stderr"]
        return out, h.matrix_cells(res, out)

    def test_rowsums(self):
        out, cells = self.run_fold(ot.rowSums)
        assert (out.rows, out.cols) == (4, 1)
        want = [na_sum(r) for r in rows_of(GRID, 4, 3)]
        assert all(close(g, w) for g, w in zip(cells, want))

    def test_colsums(self):
        out, cells = self.run_fold(ot.colSums)
        assert (out.rows, out.cols) == (1, 3)
        want = [na_sum(c) for c in cols_of(GRID, 4, 3)]
        assert all(close(g, w) for g, w in zip(cells, want))

    def test_rowmeans(self):
        _, cells = self.run_fold(ot.rowMeans)
        want = [NA if s is NA else s / 3 for s in
                (na_sum(r) for r in rows_of(GRID, 4, 3))]
        assert all(close(g, w) for g, w in zip(cells, want))

    def test_colmeans(self):
        _, cells = self.run_fold(ot.colMeans)
        want = [NA if s is NA else s / 4 for s in
                (na_sum(c) for c in cols_of(GRID, 4, 3))]
        assert all(close(g, w) for g, w in zip(cells, want))

    def test_colsums_loops_over_columns(self):
        # 10x7 input: one loop frame over the 7 columns, O(1) body
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 10, 7)
            ot.colSums(x)
            dot = ot.emit(ctx)
        assert "forloop 1 1 7 1" in dot
        assert dot.count("slice") == 1
        assert dot.count("sum") == 1
        assert h.check(dot).returncode == 0


class TestReductions:
    def run_scalars(self, build, data):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", len(data), 1)
            outs = build(x)
            dot = ot.emit(ctx)
        res = h.run(dot, {"x": (len(data), 1, data)})
        assert res["code"] == 0, res["stderr"]
        return [h.register_value(res, s) for s in outs]

    def test_sum_prod_min_max(self):
        vals = self.run_scalars(
            lambda x: (ot.sum(x), ot.prod(x), ot.min(x), ot.max(x)),
            [4.0, -2.5, 0.5])
        assert vals[0] == 2.0
        assert vals[1] == -5.0
        assert vals[2] == -2.5
        assert vals[3] == 4.0

    def test_na_poisons_plain_sum(self):
        vals = self.run_scalars(lambda x: (ot.sum(x),), [1.0, NA, 3.0])
        assert vals[0] is NA

    def test_any_all_kleene(self):
        vals = self.run_scalars(lambda x: (ot.any(x), ot.all(x)),
                                [1.0, 0.0, 1.0])
        assert vals == [1.0, 0.0]
        vals = self.run_scalars(lambda x: (ot.any(x), ot.all(x)),
                                [1.0, NA, 1.0])
        assert vals[0] == 1.0  # definite witness beats NA
        assert vals[1] is NA

    def test_range_of(self):
        vals = self.run_scalars(lambda x: ot.range_of(x),
                                [4.0, -2.5, 0.5])
        assert vals == [-2.5, 4.0]

    def test_mean(self):
        vals = self.run_scalars(lambda x: (ot.mean(x),), [1.0, 2.0, 6.0])
        assert close(vals[0], 3.0)

    def test_na_rm_sum_spec_example(self):
        vals = self.run_scalars(lambda x: (ot.na_rm_sum(x),),
                                [1.0, NA, 3.0])
        assert vals[0] == 4.0

    def test_na_rm_sum_expansion(self):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 3, 1)
            ot.na_rm_sum(x)
            dot = ot.emit(ctx)
        assert "\tNA? $1" in dot
        assert "select $3 $2 #0.0 $1" in dot
        assert "sum %1 $3" in dot


class TestElementwiseHelpers:
    def test_pmin_pmax_with_na(self):
        with ot.TraceContext() as ctx:
            a = ot.declare_dataset("a", 3, 1)
            b = ot.declare_dataset("b", 3, 1)
            lo = ot.pmin(a, b)
            hi = ot.pmax(a, b)
            dot = ot.emit(ctx)
        res = h.run(dot, {"a": (3, 1, [1.0, 5.0, NA]),
                          "b": (3, 1, [2.0, 3.0, 1.0])})
        assert res["code"] == 0, res["stderr"]
        assert [c if c is NA else c for c in h.matrix_cells(res, lo)] \
            == [1.0, 3.0, NA]
        assert h.matrix_cells(res, hi) == [2.0, 5.0, NA]

    def test_pmin_scalar_arm(self):
        with ot.TraceContext() as ctx:
            a = ot.declare_dataset("a", 3, 1)
            capped = ot.pmin(a, 2.0)
            dot = ot.emit(ctx)
        res = h.run(dot, {"a": (3, 1, [1.0, 5.0, -0.5])})
        assert h.matrix_cells(res, capped) == [1.0, 2.0, -0.5]

    def test_transpose(self):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 2, 3)
            xt = ot.t(x)
            dot = ot.emit(ctx)
        assert (xt.rows, xt.cols) == (3, 2)
        data = [1.0, 2.0, 3.0, 4.0, 5.0, NA]
        res = h.run(dot, {"x": (2, 3, data)})
        assert res["code"] == 0, res["stderr"]
        assert h.matrix_cells(res, xt) == [1.0, 4.0, 2.0, 5.0, 3.0, NA]

    def test_as_numeric_flattens_column_major(self):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 2, 3)
            flat = ot.as_numeric(x)
            dot = ot.emit(ctx)
        assert (flat.rows, flat.cols) == (6, 1)
        res = h.run(dot, {"x": (2, 3, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])})
        assert h.matrix_cells(res, flat) == [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]

    def test_as_numeric_passthrough(self):
        with ot.TraceContext():
            x = ot.declare_dataset("x", 2, 2)
            s = x[1, 1]
            assert ot.as_numeric(s) is s
        assert ot.as_numeric(3) == 3.0

    def test_nrow_ncol(self):
        with ot.TraceContext():
            x = ot.declare_dataset("x", 7, 2)
            assert ot.nrow(x) == 7
            assert ot.ncol(x) == 2
            with pytest.raises(TraceError):
                ot.nrow(x[1, 1])


class TestPchisq:
    def test_spec_point_value(self):
        with ot.TraceContext() as ctx:
            p = ot.pchisq_df1(3.841)
            dot = ot.emit(ctx)
        res = h.run(dot, {})
        assert res["code"] == 0, res["stderr"]
        assert abs(h.register_value(res, p) - 0.95) < 1e-3

    def test_matches_erf_reference_on_grid(self):
        qs = [0.001, 0.5, 1.0, 2.706, 3.841, 6.635, 10.83, 20.0]
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("q", len(qs), 1)
            p = ot.pchisq_df1(x)
            dot = ot.emit(ctx)
        res = h.run(dot, {"q": (len(qs), 1, qs)})
        assert res["code"] == 0, res["stderr"]
        for got, q in zip(h.matrix_cells(res, p), qs):
            assert abs(got - math.erf(math.sqrt(q / 2))) < 1e-3, q


def fisher_oracle(a, r1, c1, n, eps=1e-6):
    """Direct hypergeometric enumeration with the same tie slack."""
    lf = math.lgamma

    def s(k):
        return lf(k + 1) + lf(r1 - k + 1) + lf(c1 - k + 1) \
            + lf(n - r1 - c1 + k + 1)

    norm = lf(r1 + 1) + lf(n - r1 + 1) + lf(c1 + 1) + lf(n - c1 + 1) \
        - lf(n + 1)
    klo = max(0, c1 - (n - r1))
    khi = min(r1, c1)
    sa = s(a)
    return math.fsum(math.exp(norm - s(k)) for k in range(klo, khi + 1)
                     if s(k) >= sa - eps)


class TestFisher:
    def run_one(self, a, r1, c1, n):
        with ot.TraceContext() as ctx:
            obs = ot.declare_dataset("obs", 1, 1)
            p = ot.fisher_test_2x2(obs[1, 1], r1, c1, n)
            dot = ot.emit(ctx)
        res = h.run(dot, {"obs": (1, 1, [float(a)])})
        assert res["code"] == 0, res["stderr"]
        return h.register_value(res, p)

    def test_two_sided_p_values(self):
        for a, r1, c1, n in [(3, 10, 9, 24), (0, 5, 7, 20), (5, 12, 9, 30)]:
            got = self.run_one(a, r1, c1, n)
            assert abs(got - fisher_oracle(a, r1, c1, n)) < 1e-6

    def test_concrete_observed_cell(self):
        with ot.TraceContext() as ctx:
            p = ot.fisher_test_2x2(2, 6, 5, 14)
            dot = ot.emit(ctx)
        assert p.taint == ot.CONCRETE
        res = h.run(dot, {})
        got = h.register_value(res, p)
        assert abs(got - fisher_oracle(2, 6, 5, 14)) < 1e-6

    def test_domain_rejection_at_trace_time(self):
        with ot.TraceContext():
            with pytest.raises(TraceError, match="domain"):
                ot.fisher_test_2x2(3, 100, 90, 171)

    def test_inconsistent_margins(self):
        with ot.TraceContext():
            for r1, c1, n in [(-1, 3, 10), (3, 11, 10), (3, 3, 0)]:
                with pytest.raises(TraceError, match="margins"):
                    ot.fisher_test_2x2(1, r1, c1, n)
            with pytest.raises(TraceError, match="concrete"):
                ot.fisher_test_2x2(1, 3.5, 3, 10)

    def test_observed_outside_margins_degrades_to_one(self):
        # margins cap the feasible window at min(r1, c1) = 3
        got = self.run_one(5, 3, 8, 20)
        assert abs(got - 1.0) < 1e-6

    def test_table_shared_between_calls(self):
        with ot.TraceContext() as ctx:
            obs = ot.declare_dataset("obs", 2, 1)
            ot.fisher_test_2x2(obs[1, 1], 4, 5, 12)
            ot.fisher_test_2x2(obs[2, 1], 3, 3, 9)
            dot = ot.emit(ctx)
        assert dot.count("def const") == 1
        assert dot.startswith("def const")  # hoisted above first use
        assert h.check(dot).returncode == 0
