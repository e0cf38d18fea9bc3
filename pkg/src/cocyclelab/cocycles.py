"""Cocycle fields x -> A(x): rule families, patches, products, distances.

Supported rule families (constant, per-symbol table, per-orbit-index table,
trigonometric polynomial in the circle angle) are exactly the ones where
sup-distances and integrals are computable in closed form.  Perturbations are
pointwise patches: an ordered list of (point, replacement operator) pairs,
first match wins.  A patched field is typically only measurable; continuity
is a property of the unpatched base rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import BasePoint, BaseSystem, BernoulliPoint, PeriodicPoint, RotationPoint
from .errors import DimensionMismatchError, NumericError, RejectedInputError
from .operators import TruncatedOperator, compose, exterior_power, operator_norm


def _check_operator_dim(op: TruncatedOperator, dim: int, what: str):
    if op.dim != dim:
        raise DimensionMismatchError(f"{what} has dimension {op.dim}, field expects {dim}")


@dataclass(frozen=True)
class ConstantRule:
    operator: TruncatedOperator

    def validate(self, base: BaseSystem, dim: int):
        _check_operator_dim(self.operator, dim, "constant rule operator")

    def value(self, base: BaseSystem, x: BasePoint) -> TruncatedOperator:
        return self.operator

    def sup_norm(self, base: BaseSystem) -> float:
        return operator_norm(self.operator)


@dataclass(frozen=True)
class PerSymbolRule:
    """Operator chosen by the symbol at the window center of a Bernoulli point."""

    table: tuple

    def validate(self, base: BaseSystem, dim: int):
        if base.kind != "bernoulli":
            raise RejectedInputError("per-symbol rules require a bernoulli base")
        if len(self.table) != base.num_symbols:
            raise RejectedInputError(
                f"per-symbol table has {len(self.table)} entries, base has {base.num_symbols} symbols"
            )
        for op in self.table:
            _check_operator_dim(op, dim, "per-symbol table operator")

    def value(self, base: BaseSystem, x: BernoulliPoint) -> TruncatedOperator:
        return self.table[base.symbol_at(x)]

    def sup_norm(self, base: BaseSystem) -> float:
        return max(operator_norm(op) for op in self.table)


@dataclass(frozen=True)
class PerOrbitIndexRule:
    """Operator chosen by the index of a periodic-orbit point."""

    table: tuple

    def validate(self, base: BaseSystem, dim: int):
        if base.kind != "periodic":
            raise RejectedInputError("per-orbit-index rules require a periodic base")
        if len(self.table) != base.period:
            raise RejectedInputError(
                f"per-orbit-index table has {len(self.table)} entries, base period is {base.period}"
            )
        for op in self.table:
            _check_operator_dim(op, dim, "per-orbit-index table operator")

    def value(self, base: BaseSystem, x: PeriodicPoint) -> TruncatedOperator:
        return self.table[x.index]

    def sup_norm(self, base: BaseSystem) -> float:
        return max(operator_norm(op) for op in self.table)


@dataclass(frozen=True)
class TrigPolynomialRule:
    """A(angle) = c0 + sum_k cos(2 pi k angle) * cos_coeffs[k-1] + sin(...) * sin_coeffs[k-1]."""

    constant: TruncatedOperator
    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()

    def validate(self, base: BaseSystem, dim: int):
        if base.kind != "rotation":
            raise RejectedInputError("trig polynomial rules require a circle-rotation base")
        _check_operator_dim(self.constant, dim, "trig constant term")
        for op in list(self.cos_coeffs) + list(self.sin_coeffs):
            _check_operator_dim(op, dim, "trig coefficient")

    def value(self, base: BaseSystem, x: RotationPoint) -> TruncatedOperator:
        angle = base.rotation_angle(x)
        m = self.constant.entries.copy()
        for k, op in enumerate(self.cos_coeffs, start=1):
            m += math.cos(2.0 * math.pi * k * angle) * op.entries
        for k, op in enumerate(self.sin_coeffs, start=1):
            m += math.sin(2.0 * math.pi * k * angle) * op.entries
        tail = self.constant.tail_bound + sum(
            op.tail_bound for op in list(self.cos_coeffs) + list(self.sin_coeffs)
        )
        return TruncatedOperator(m, tail)

    def sup_norm(self, base: BaseSystem) -> float:
        # triangle-inequality bound; an upper bound is the safe direction
        # everywhere this is consumed (rotation budgets shrink with it)
        return operator_norm(self.constant) + sum(
            operator_norm(op) for op in list(self.cos_coeffs) + list(self.sin_coeffs)
        )


@dataclass(frozen=True)
class DerivedRule:
    """Pointwise image of another field under an operator transform (internal).

    Used for compound (exterior-power) cocycles; not config-serializable.
    """

    source: "CocycleField"
    transform: object
    label: str = "derived"

    def validate(self, base: BaseSystem, dim: int):
        if self.source.base is not base:
            raise RejectedInputError("derived rule must share the source field's base system")

    def value(self, base: BaseSystem, x: BasePoint) -> TruncatedOperator:
        return self.transform(self.source.evaluate(x))

    def sup_norm(self, base: BaseSystem) -> float:
        raise RejectedInputError(f"sup-norm of a {self.label} rule is not available in closed form")


_TABLE_RULES = (ConstantRule, PerSymbolRule, PerOrbitIndexRule)


@dataclass(frozen=True)
class Patch:
    """Pointwise override: at `point`, the field evaluates to `operator`."""

    point: BasePoint
    operator: TruncatedOperator
    note: str = ""


@dataclass(frozen=True)
class CocycleField:
    """Assignment x -> A(x) over a base system, with pointwise patches.

    Patches are checked in order and the first match wins; `with_patch`
    prepends, so the most recent perturbation takes precedence at a point.
    """

    base: BaseSystem
    dim: int
    rule: object
    patches: tuple = ()

    def __post_init__(self):
        if self.dim < 1:
            raise RejectedInputError("field dimension must be positive")
        self.rule.validate(self.base, self.dim)
        for patch in self.patches:
            self.base._check_point(patch.point)
            _check_operator_dim(patch.operator, self.dim, "patch operator")

    # -- constructors --------------------------------------------------------

    @staticmethod
    def constant(base: BaseSystem, operator: TruncatedOperator) -> "CocycleField":
        return CocycleField(base, operator.dim, ConstantRule(operator))

    @staticmethod
    def per_symbol(base: BaseSystem, table) -> "CocycleField":
        table = tuple(table)
        return CocycleField(base, table[0].dim, PerSymbolRule(table))

    @staticmethod
    def per_orbit_index(base: BaseSystem, table) -> "CocycleField":
        table = tuple(table)
        return CocycleField(base, table[0].dim, PerOrbitIndexRule(table))

    @staticmethod
    def rotation_fourier(base: BaseSystem, constant, cos_coeffs=(), sin_coeffs=()) -> "CocycleField":
        rule = TrigPolynomialRule(constant, tuple(cos_coeffs), tuple(sin_coeffs))
        return CocycleField(base, constant.dim, rule)

    def with_patch(self, point: BasePoint, operator: TruncatedOperator, note: str = "") -> "CocycleField":
        patch = Patch(point, operator, note)
        return CocycleField(self.base, self.dim, self.rule, (patch,) + self.patches)

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, x: BasePoint) -> TruncatedOperator:
        """A(x); patches first (in order), then the base rule."""
        for patch in self.patches:
            if patch.point == x:
                return patch.operator
        return self.rule.value(self.base, x)

    def matrices_along_orbit(self, x: BasePoint, n: int):
        """Raw matrices A(x), A(f x), ..., A(f^{n-1} x) as an iterator.

        Fast path for long runs: per-symbol fields hash the whole symbol
        stretch at once instead of stepping point objects.
        """
        if n <= 0:
            return
        if not self.patches and isinstance(self.rule, PerSymbolRule):
            syms = self.base.symbols(x, np.arange(x.center, x.center + n))
            entries = [op.entries for op in self.rule.table]
            for s in syms:
                yield entries[s]
            return
        if not self.patches and isinstance(self.rule, ConstantRule):
            m = self.rule.operator.entries
            for _ in range(n):
                yield m
            return
        pt = x
        for _ in range(n):
            yield self.evaluate(pt).entries
            pt = self.base.step(pt)

    def random_product(self, x: BasePoint, n: int) -> TruncatedOperator:
        """A^n(x) = A(f^{n-1} x) ... A(f x) A(x); A^0 = identity.

        Raw entries can overflow for long expanding products; in that case a
        NumericError points at the scaled path in the spectrum routines.
        """
        if n < 0:
            raise RejectedInputError("product length must be nonnegative")
        prod = TruncatedOperator.identity(self.dim)
        pt = x
        for _ in range(n):
            prod = compose(self.evaluate(pt), prod)
            if not np.all(np.isfinite(prod.entries)):
                raise NumericError(
                    "random product overflowed in raw entries; use the scaled "
                    "accumulation in cocyclelab.lyapunov (spectrum / limit_operator_estimate)"
                )
            pt = self.base.step(pt)
        return prod

    # -- metrics -------------------------------------------------------------

    def sup_norm(self) -> float:
        """max_x ||A(x)||, exact for table rules, triangle bound for trig rules."""
        val = self.rule.sup_norm(self.base)
        for patch in self.patches:
            val = max(val, operator_norm(patch.operator))
        return val

    def integrability_estimate(self, count: int) -> float:
        """Monte Carlo average of log+ ||A(x)|| over the invariant measure."""
        pts = self.base.sample_measure(count)
        vals = [max(0.0, math.log(operator_norm(self.evaluate(p)))) if operator_norm(self.evaluate(p)) > 0 else 0.0 for p in pts]
        return float(np.mean(vals))


def _rules_comparable(f1: CocycleField, f2: CocycleField) -> bool:
    r1, r2 = f1.rule, f2.rule
    if not isinstance(r1, _TABLE_RULES) or not isinstance(r2, _TABLE_RULES):
        return False
    if isinstance(r1, ConstantRule) or isinstance(r2, ConstantRule):
        return True
    return type(r1) is type(r2) and len(r1.table) == len(r2.table)


def _rule_tables(f1: CocycleField, f2: CocycleField):
    r1, r2 = f1.rule, f2.rule
    if isinstance(r1, ConstantRule) and isinstance(r2, ConstantRule):
        return (r1.operator,), (r2.operator,)
    if isinstance(r1, ConstantRule):
        return (r1.operator,) * len(r2.table), r2.table
    if isinstance(r2, ConstantRule):
        return r1.table, (r2.operator,) * len(r1.table)
    return r1.table, r2.table


def cocycle_distance(f1: CocycleField, f2: CocycleField, sample=None) -> float:
    """Sup-distance max_x ||A1(x) - A2(x)||.

    Exact (not sampled) when both rules come from the finite-valued families
    and are comparable; patch points of both fields are always included.
    Otherwise the supremum is taken over the provided sample plus patch points.
    """
    if f1.base is not f2.base and f1.base != f2.base:
        raise RejectedInputError("cocycle distance requires a common base system")
    if f1.dim != f2.dim:
        raise DimensionMismatchError(f"field dimensions differ: {f1.dim} vs {f2.dim}")

    def _at(p):
        d = f1.evaluate(p).entries - f2.evaluate(p).entries
        return float(np.linalg.norm(d, 2))

    best = 0.0
    patch_points = [p.point for p in f1.patches] + [p.point for p in f2.patches]
    for p in patch_points:
        best = max(best, _at(p))
    if _rules_comparable(f1, f2):
        t1, t2 = _rule_tables(f1, f2)
        for a, b in zip(t1, t2):
            best = max(best, float(np.linalg.norm(a.entries - b.entries, 2)))
        return best
    if sample is None:
        raise RejectedInputError(
            "cocycle distance between these rule families is not exact; provide a sample"
        )
    for p in sample:
        best = max(best, _at(p))
    return best


def exterior_field(f: CocycleField, p: int, cap: int = None) -> CocycleField:
    """The compound cocycle x -> exterior_power(A(x), p).

    Table rules are transformed table-entry by table-entry (exact); other
    rules evaluate pointwise through the compound map.  Patches map through.
    """
    from .operators import DEFAULT_COMPOUND_CAP

    cap = DEFAULT_COMPOUND_CAP if cap is None else cap
    wedge = lambda op: exterior_power(op, p, cap=cap)
    probe = wedge(TruncatedOperator.identity(f.dim))  # raises CapacityError early
    out_dim = probe.dim

    rule = f.rule
    if isinstance(rule, ConstantRule):
        new_rule = ConstantRule(wedge(rule.operator))
    elif isinstance(rule, PerSymbolRule):
        new_rule = PerSymbolRule(tuple(wedge(op) for op in rule.table))
    elif isinstance(rule, PerOrbitIndexRule):
        new_rule = PerOrbitIndexRule(tuple(wedge(op) for op in rule.table))
    else:
        new_rule = DerivedRule(source=CocycleField(f.base, f.dim, f.rule), transform=wedge, label=f"wedge^{p}")
    patches = tuple(Patch(pt.point, wedge(pt.operator), pt.note) for pt in f.patches)
    return CocycleField(f.base, out_dim, new_rule, patches)
