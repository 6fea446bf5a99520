"""Tracing mechanics: contexts, pseudonyms, capture, and framing."""

import random

import pytest

import ottrace as ot
from ottrace.core import TraceError

import cliharness as h


def fig_body(x):
    def body(i):
        x[i, 1] = ot.select_if(x[i, 1] < 0.0, 0.0, x[i, 1])
    return body


class TestContext:
    def test_declare_dataset(self):
        with ot.TraceContext():
            x = ot.declare_dataset("geno", 10, 7)
        assert (x.rows, x.cols) == (10, 7)
        assert x.taint == ot.PSEUDONYM
        assert x.mid == 1

    def test_duplicate_dataset_rejected(self):
        with ot.TraceContext():
            ot.declare_dataset("geno", 10, 7)
            with pytest.raises(TraceError, match="already declared"):
                ot.declare_dataset("geno", 3, 3)

    def test_dataset_name_charset(self):
        with ot.TraceContext():
            for bad in ("", "with space", "na_me", "dot.name", "hé"):
                with pytest.raises(TraceError):
                    ot.declare_dataset(bad, 2, 2)

    def test_one_by_one_usable_as_scalar(self):
        with ot.TraceContext():
            x = ot.declare_dataset("v", 1, 1)
            s = x[1, 1] + 1.0
        assert s.taint == ot.PSEUDONYM

    def test_no_active_context(self):
        with pytest.raises(TraceError, match="TraceContext"):
            ot.declare_dataset("geno", 2, 2)

    def test_emit_empty_context_is_valid(self):
        with ot.TraceContext() as ctx:
            pass
        assert ot.emit(ctx) == ""
        assert h.check("").returncode == 0

    def test_emit_ends_with_newline(self):
        with ot.TraceContext() as ctx:
            ot.declare_dataset("g", 2, 2)
        assert ot.emit(ctx).endswith("end 1\n")

    def test_cross_context_mixing_rejected(self):
        with ot.TraceContext():
            a = ot.declare_dataset("a", 2, 2)
        with ot.TraceContext():
            b = ot.declare_dataset("b", 2, 2)
            with pytest.raises(TraceError, match="different TraceContext"):
                a + b


class TestOperatorCapture:
    def test_elementwise_compare_emits_def(self):
        with ot.TraceContext() as ctx:
            g = ot.declare_dataset("g", 10, 7)
            mask = g != 0.0
        assert (mask.rows, mask.cols) == (10, 7)
        assert mask.taint == ot.PSEUDONYM
        assert "\t!= $1 #0.0" in ot.emit(ctx)

    def test_mask_conjunction(self):
        with ot.TraceContext() as ctx:
            g = ot.declare_dataset("g", 10, 7)
            both = (g != 0.0) & (g != 1.0)
        text = ot.emit(ctx)
        assert "\t& $2 $3" in text
        assert both.taint == ot.PSEUDONYM

    def test_every_binary_op_spells_its_opcode(self):
        cases = [(lambda a, b: a + b, "+"), (lambda a, b: a - b, "-"),
                 (lambda a, b: a * b, "*"), (lambda a, b: a / b, "/"),
                 (lambda a, b: a % b, "%%"), (lambda a, b: a ** b, "^"),
                 (lambda a, b: a == b, "=="), (lambda a, b: a != b, "!="),
                 (lambda a, b: a < b, "<"), (lambda a, b: a <= b, "<="),
                 (lambda a, b: a > b, ">"), (lambda a, b: a >= b, ">="),
                 (lambda a, b: a & b, "&"), (lambda a, b: a | b, "|")]
        for fn, opcode in cases:
            with ot.TraceContext() as ctx:
                g = ot.declare_dataset("g", 2, 3)
                fn(g, 2.0)
            assert f"\t{opcode} $1 #2.0" in ot.emit(ctx), opcode

    def test_reflected_operands_keep_order(self):
        with ot.TraceContext() as ctx:
            g = ot.declare_dataset("g", 2, 2)
            2.0 - g
        assert "\t- #2.0 $1" in ot.emit(ctx)

    def test_unary_forms(self):
        with ot.TraceContext() as ctx:
            g = ot.declare_dataset("g", 2, 2)
            -g
            abs(g)
            ~(g == 1.0)
        text = ot.emit(ctx)
        assert "\t- #0.0 $1" in text
        assert "\tabs $1" in text
        assert "\t! $4" in text  # ids: $2 neg, $3 abs, $4 mask, $5 not

    def test_scalar_ops_use_registers(self):
        with ot.TraceContext() as ctx:
            g = ot.declare_dataset("g", 3, 3)
            s = g[2, 2] * 4.0
        assert s.text == "%1"
        assert "* %1 $1@(2,2) #4.0" in ot.emit(ctx)

    def test_shape_mismatch_at_trace_time(self):
        with ot.TraceContext():
            a = ot.declare_dataset("a", 2, 3)
            b = ot.declare_dataset("b", 3, 2)
            with pytest.raises(TraceError, match="shape mismatch"):
                a + b

    def test_matmul_shapes(self):
        with ot.TraceContext() as ctx:
            a = ot.declare_dataset("a", 2, 3)
            b = ot.declare_dataset("b", 3, 4)
            c = a @ b
        assert (c.rows, c.cols) == (2, 4)
        assert "\t%*% $1 $2" in ot.emit(ctx)

    def test_matmul_chain_mismatch(self):
        with ot.TraceContext():
            a = ot.declare_dataset("a", 2, 3)
            b = ot.declare_dataset("b", 4, 2)
            with pytest.raises(TraceError, match="do not chain"):
                a @ b

    def test_nan_literal_and_inf_rejection(self):
        with ot.TraceContext() as ctx:
            g = ot.declare_dataset("g", 2, 2)
            g + float("nan")
            with pytest.raises(TraceError, match="infinity"):
                g + float("inf")
        assert "\t+ $1 #NaN" in ot.emit(ctx)

    def test_bool_coerces_to_unit(self):
        with ot.TraceContext() as ctx:
            g = ot.declare_dataset("g", 2, 2)
            g + True
        assert "\t+ $1 #1.0" in ot.emit(ctx)


class TestControlFlow:
    def test_native_branch_guidance(self):
        with ot.TraceContext():
            g = ot.declare_dataset("g", 2, 2)
            with pytest.raises(TraceError, match="select_if"):
                if g[1, 1] < 0.0:
                    pass

    def test_native_iteration_guidance(self):
        with ot.TraceContext():
            g = ot.declare_dataset("g", 2, 2)
            with pytest.raises(TraceError, match="forloop"):
                for _ in g:
                    pass

    def test_forloop_frames_and_single_emission(self):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 10, 7)
            ot.forloop(1, 10, 1, fig_body(x))
        text = ot.emit(ctx)
        assert "forloop 1 1 10 1\n" in text
        assert text.count("select") == 1  # body traced exactly once
        assert text.rstrip().endswith("endloop 1")

    def test_forloop_pseudonym_bound_rejected(self):
        with ot.TraceContext():
            x = ot.declare_dataset("x", 3, 3)
            bound = x[1, 1]
            with pytest.raises(TraceError, match="pseudonym"):
                ot.forloop(1, bound, 1, lambda i: None)

    def test_forloop_traced_concrete_bound_rejected(self):
        # even a Concrete traced scalar is not a grammatical loop bound
        with ot.TraceContext():
            ot.declare_dataset("x", 3, 3)
            reg = ot.select_if(True, 1.0, 2.0)
            assert reg.taint == ot.CONCRETE
            with pytest.raises(TraceError, match="host integer"):
                ot.forloop(1, reg, 1, lambda i: None)

    def test_forloop_degenerate_bounds(self):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 3, 3)
            ot.forloop(2, 2, 1, fig_body(x))  # single frame is fine
            with pytest.raises(TraceError, match="step cannot be 0"):
                ot.forloop(1, 3, 0, lambda i: None)
            with pytest.raises(TraceError, match="zero times"):
                ot.forloop(3, 1, 1, lambda i: None)
            with pytest.raises(TraceError, match="integer"):
                ot.forloop(1, 2.5, 1, lambda i: None)
        assert "forloop 1 2 2 1" in ot.emit(ctx)

    def test_nested_loops_number_by_depth(self):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 4, 5)

            def outer(i):
                ot.forloop(1, 5, 1, lambda j: x.__setitem__((i, j), 0.0))

            ot.forloop(1, 4, 1, outer)
        text = ot.emit(ctx)
        assert "forloop 1 1 4 1" in text
        assert "forloop 2 1 5 1" in text
        assert "update $1 [\\1] [\\2] #0.0" in text

    def test_sequential_loops_reuse_depth_one(self):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 3, 3)
            ot.forloop(1, 3, 1, fig_body(x))
            ot.forloop(1, 3, 1, fig_body(x))
        assert ot.emit(ctx).count("forloop 1 1 3 1") == 2
        assert h.check(ot.emit(ctx)).returncode == 0

    def test_select_if_uniform_emission_on_concrete(self):
        with ot.TraceContext() as ctx:
            r = ot.select_if(True, 1.0, 2.0)
        assert "select %1 #1.0 #1.0 #2.0" in ot.emit(ctx)
        assert r.taint == ot.CONCRETE

    def test_nested_select_if_order(self):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 2, 2)
            inner = ot.select_if(x[1, 1] < 0.0, 0.0, 1.0)
            ot.select_if(x[2, 2] < 0.0, inner, 2.0)
        lines = [l for l in ot.emit(ctx).splitlines() if "select" in l]
        assert len(lines) == 2
        assert lines[0].startswith("select %2")
        assert lines[1].startswith("select %4")

    def test_select_if_matrix_broadcast(self):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 3, 4)
            picked = ot.select_if(x == 0.0, x, 0.5)
        assert (picked.rows, picked.cols) == (3, 4)
        assert "select $3 $2 $1 #0.5" in ot.emit(ctx)

    def test_select_if_arm_shape_mismatch(self):
        with ot.TraceContext():
            x = ot.declare_dataset("x", 3, 4)
            y = ot.declare_dataset("y", 4, 3)
            with pytest.raises(TraceError, match="shape mismatch"):
                ot.select_if(x == 0.0, x, y)


class TestIndexing:
    def test_cell_reference_text(self):
        with ot.TraceContext():
            x = ot.declare_dataset("x", 5, 5)
            assert x[2, 3].text == "$1@(2,3)"

    def test_static_bounds_checked_at_trace_time(self):
        with ot.TraceContext():
            x = ot.declare_dataset("x", 5, 5)
            with pytest.raises(TraceError, match="outside"):
                x[6, 1]
            with pytest.raises(TraceError, match="outside"):
                x[0, 1]
            with pytest.raises(TraceError, match="outside"):
                x[slice(2, 9), 1]

    def test_slice_forms(self):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 6, 4)
            w = x[slice(2, 5), [1, 3]]
            col = x[:, 2]
        assert (w.rows, w.cols) == (4, 2)
        assert (col.rows, col.cols) == (6, 1)
        text = ot.emit(ctx)
        assert "slice $2 [2:5:1] [1,3] $1" in text
        assert "slice $3 [1:6:1] [2] $1" in text

    def test_pseudonym_index_rejected(self):
        with ot.TraceContext():
            x = ot.declare_dataset("x", 5, 5)
            with pytest.raises(TraceError, match="cannot depend"):
                x[x[1, 1], 1]

    def test_setitem_window_shape_checked(self):
        with ot.TraceContext():
            x = ot.declare_dataset("x", 5, 5)
            y = ot.declare_dataset("y", 2, 2)
            with pytest.raises(TraceError, match="update window"):
                x[slice(1, 3), slice(1, 2)] = y

    def test_setitem_scalar_broadcast(self):
        with ot.TraceContext() as ctx:
            x = ot.declare_dataset("x", 5, 5)
            x[slice(1, 2), slice(1, 5)] = 0.0
        assert "update $1 [1:2:1] [1:5:1] #0.0" in ot.emit(ctx)

    def test_single_subscript_rejected(self):
        with ot.TraceContext():
            x = ot.declare_dataset("x", 5, 5)
            with pytest.raises(TraceError, match="row, col"):
                x[3]


class TestEmissionContract:
    def test_byte_determinism(self):
        def build():
            with ot.TraceContext() as ctx:
                g = ot.declare_dataset("g", 8, 3)
                mask = ot.is_na(g)
                cleaned = ot.select_if(mask, 0.0, g)
                ot.forloop(1, 8, 1, fig_body(cleaned))
                ot.sum(cleaned)
            return ot.emit(ctx)

        assert build() == build()

    def test_random_compositions_pass_check(self):
        rng = random.Random(20260819)
        binops = [lambda a, b: a + b, lambda a, b: a - b,
                  lambda a, b: a * b, lambda a, b: a / b,
                  lambda a, b: a < b, lambda a, b: a >= b,
                  lambda a, b: (a == b) | (a != b)]
        for trial in range(25):
            with ot.TraceContext() as ctx:
                rows = rng.randint(1, 6)
                cols = rng.randint(1, 6)
                pool = [ot.declare_dataset("d0", rows, cols)]
                for step in range(rng.randint(1, 8)):
                    op = rng.choice(binops)
                    lhs = rng.choice(pool)
                    rhs = rng.choice(pool + [float(rng.randint(-3, 3))])
                    if isinstance(rhs, float) and rng.random() < 0.3:
                        lhs, rhs = rhs, lhs
                    pool.append(op(lhs, rhs))
                tail = pool[-1]
                if isinstance(tail, ot.PseudonymMatrix):
                    ot.select_if(tail == 0.0, 1.0, tail)
                    ot.sum(tail)
                dot = ot.emit(ctx)
            proc = h.check(dot)
            assert proc.returncode == 0, (trial, proc.stdout, dot)
