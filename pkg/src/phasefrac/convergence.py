"""Dual residual/correction convergence criteria with time-averaged flux norms.

An iterate converges when, for every active field (displacement ``u`` and
phase ``phi``), the largest residual entry is small against a time-averaged
flux norm and, if so, the last solution correction is small against the
largest incremental change of that field:

    r_max <= R_n * q_tilde        and then        c_max <= C_n * da_max

``q_tilde`` is the running time average of the spatially averaged absolute
internal flux (forces for u, phase fluxes for phi) over all increments so
far, including the current iterate.  A residual already at the
``linear_tol`` level (default 1e-8) marks the increment as linear and the
correction check is skipped, so exactly solvable increments converge in a
single iteration.
"""

from dataclasses import dataclass, field

U_FIELD = "u"
PHI_FIELD = "phi"


@dataclass
class FieldStats:
    """Per-iteration scalars feeding one field's convergence checks."""

    r_max: float       # largest |residual| over the field's free DOFs
    flux_mean: float   # spatial mean of per-DOF absolute internal flux
    c_max: float       # largest |last correction|
    da_max: float      # largest |incremental change| so far this increment


@dataclass
class FluxHistory:
    """Running sums of the per-increment spatial flux averages."""

    sums: dict = field(default_factory=lambda: {U_FIELD: 0.0, PHI_FIELD: 0.0})
    count: int = 0

    def q_tilde(self, field_name: str, current_mean: float) -> float:
        """Time average over committed increments plus the current iterate."""
        return (self.sums[field_name] + current_mean) / (self.count + 1)

    def commit(self, means: dict):
        for name, value in means.items():
            self.sums[name] += value
        self.count += 1


@dataclass
class FieldVerdict:
    residual_ok: bool
    correction_ok: bool
    r_max: float
    q_tilde: float
    c_max: float
    da_max: float

    @property
    def passed(self) -> bool:
        return self.residual_ok and self.correction_ok


@dataclass
class ConvergenceVerdict:
    fields: dict

    @property
    def converged(self) -> bool:
        return all(v.passed for v in self.fields.values())

    def describe(self) -> str:
        parts = []
        for name, v in self.fields.items():
            parts.append(
                f"{name}: r_max={v.r_max:.3e} (q~={v.q_tilde:.3e}, "
                f"{'ok' if v.residual_ok else 'FAIL'}), "
                f"c_max={v.c_max:.3e} (da={v.da_max:.3e}, "
                f"{'ok' if v.correction_ok else 'FAIL'})"
            )
        return "; ".join(parts)


def check_convergence(
    stats: dict,
    flux: FluxHistory,
    r_tol: float = 0.005,
    c_tol: float = 0.01,
    linear_tol: float = 1e-8,
) -> ConvergenceVerdict:
    """Apply the dual criterion to every field in ``stats``.

    Parameters
    ----------
    stats : dict
        Field name -> :class:`FieldStats`.  Sub-problem solves pass a single
        field; monolithic solves pass both.
    flux : FluxHistory
        Committed flux averages of previous increments.

    Notes
    -----
    A zero flux norm with a nonzero residual can never satisfy the residual
    inequality, so such states report not converged.
    """
    verdicts = {}
    for name, s in stats.items():
        q = flux.q_tilde(name, s.flux_mean)
        residual_ok = s.r_max <= r_tol * q
        if residual_ok and s.r_max <= linear_tol * q:
            correction_ok = True  # linear increment, correction check waived
        else:
            correction_ok = s.c_max <= c_tol * s.da_max
        verdicts[name] = FieldVerdict(
            residual_ok=residual_ok,
            correction_ok=correction_ok,
            r_max=s.r_max,
            q_tilde=q,
            c_max=s.c_max,
            da_max=s.da_max,
        )
    return ConvergenceVerdict(fields=verdicts)
