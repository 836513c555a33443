"""Classical survival statistics for the prognostic-value pipeline.

Everything is implemented directly on numpy: Kaplan-Meier with Greenwood
variance, the log-rank test, Cox proportional hazards via Newton-Raphson on
the Breslow partial likelihood, IPCW time-dependent ROC AUC, restricted mean
survival time with normal-approximation inference, paired bootstrap AUC
comparison, median risk stratification, calibration tables, decision-curve
net benefit, and a points-based nomogram over a fitted Cox model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConvergenceError, DataError, DegenerateError, RangeError, UndefinedError
from .rng import substream

__all__ = [
    "KmCurve", "km_fit", "logrank_test", "CoxFit", "coxph_fit",
    "multivariable_pipeline", "timeroc_auc", "rmst", "rmst_compare",
    "bootstrap_auc_compare", "median_stratify", "calibration_curve",
    "dca_curve", "NomogramModel", "nomogram_build", "nomogram_score",
]


def _clean(times, events):
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=np.int64)
    if times.shape != events.shape or times.ndim != 1:
        raise DataError("times and events must be matching 1-D arrays")
    if times.size == 0:
        raise DataError("empty sample")
    if not np.isfinite(times).all() or (times <= 0).any():
        raise DataError("times must be finite and positive")
    if not np.isin(events, (0, 1)).all():
        raise DataError("events must be 0 or 1")
    return times, events


# -- Kaplan-Meier ---------------------------------------------------------------


@dataclass(frozen=True)
class KmCurve:
    """Product-limit estimate: step times, survival, risk sets, Greenwood variance."""

    times: np.ndarray  # distinct event times, ascending
    surv: np.ndarray
    n_at_risk: np.ndarray
    n_events: np.ndarray
    var: np.ndarray  # Greenwood variance of S at each step
    n: int

    def survival_at(self, t, left: bool = False) -> np.ndarray | float:
        """Step-function value S(t); ``left`` gives the left limit S(t-)."""
        side = "left" if left else "right"
        idx = np.searchsorted(self.times, np.asarray(t, dtype=np.float64), side=side) - 1
        surv = np.concatenate([[1.0], self.surv])
        out = surv[idx + 1]
        return float(out) if np.isscalar(t) else out

    def var_at(self, t) -> float:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        if idx < 0:
            return 0.0
        return float(self.var[idx])


def km_fit(times, events) -> KmCurve:
    times, events = _clean(times, events)
    order = np.argsort(times, kind="stable")
    times, events = times[order], events[order]
    n = times.size
    event_times = np.unique(times[events == 1])
    surv = np.empty(event_times.size)
    at_risk = np.empty(event_times.size, dtype=np.int64)
    d = np.empty(event_times.size, dtype=np.int64)
    s = 1.0
    green = 0.0
    var = np.empty(event_times.size)
    for k, t in enumerate(event_times):
        n_k = int(np.sum(times >= t))
        d_k = int(np.sum((times == t) & (events == 1)))
        at_risk[k] = n_k
        d[k] = d_k
        s *= 1.0 - d_k / n_k
        if n_k > d_k:
            green += d_k / (n_k * (n_k - d_k))
            var[k] = s * s * green
        else:
            green = np.inf
            var[k] = 0.0  # S reached 0; variance of a point mass
        surv[k] = s
    return KmCurve(times=event_times, surv=surv, n_at_risk=at_risk, n_events=d, var=var, n=n)


# -- log-rank --------------------------------------------------------------------


def logrank_test(groups) -> tuple[float, float]:
    """O-E log-rank test across two or more groups.

    ``groups`` is a sequence of (times, events) pairs. Returns (chi2, p) with
    k-1 degrees of freedom; raises UndefinedError when the pooled variance
    vanishes (e.g. no events shared across risk sets).
    """
    if len(groups) < 2:
        raise DataError("need at least 2 groups")
    cleaned = [_clean(t, e) for t, e in groups]
    k = len(cleaned)
    pooled = np.unique(np.concatenate([t[e == 1] for t, e in cleaned]))
    if pooled.size == 0:
        raise UndefinedError("no events in any group")
    observed = np.zeros(k)
    expected = np.zeros(k)
    cov = np.zeros((k, k))
    for t in pooled:
        n_g = np.array([np.sum(tt >= t) for tt, _ in cleaned], dtype=np.float64)
        d_g = np.array([np.sum((tt == t) & (ee == 1)) for tt, ee in cleaned], dtype=np.float64)
        n_tot = n_g.sum()
        d_tot = d_g.sum()
        if n_tot < 1 or d_tot == 0:
            continue
        observed += d_g
        expected += d_tot * n_g / n_tot
        if n_tot > 1:
            frac = n_g / n_tot
            scale = d_tot * (n_tot - d_tot) / (n_tot - 1)
            cov += scale * (np.diag(frac) - np.outer(frac, frac))
    diff = (observed - expected)[: k - 1]
    v = cov[: k - 1, : k - 1]
    if not np.any(np.abs(v) > 0):
        raise UndefinedError("log-rank variance is zero")
    try:
        stat = float(diff @ np.linalg.solve(v, diff))
    except np.linalg.LinAlgError:
        stat = float(diff @ np.linalg.pinv(v) @ diff)
    p = float(stats.chi2.sf(stat, k - 1))
    return stat, p


# -- Cox proportional hazards ------------------------------------------------------


@dataclass
class CoxFit:
    names: list[str]
    beta: np.ndarray
    se: np.ndarray
    wald_p: np.ndarray
    hr: np.ndarray
    loglik: float
    loglik_null: float
    baseline_times: np.ndarray
    baseline_cumhaz: np.ndarray  # Breslow cumulative hazard at covariates = 0
    converged: bool
    n_iter: int
    score_norm: float
    x_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def linear_predictor(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.beta

    def cumhaz_at(self, t) -> np.ndarray | float:
        idx = np.searchsorted(self.baseline_times, np.asarray(t, dtype=np.float64), side="right") - 1
        ch = np.concatenate([[0.0], self.baseline_cumhaz])
        out = ch[idx + 1]
        return float(out) if np.isscalar(t) else out


def _cox_quantities(beta, times, events, x):
    """Breslow partial log-likelihood, score, and information matrix.

    Risk-set sums are cumulative sums along descending time; subjects tied on
    time share the risk set of their last (deepest) index.
    """
    order = np.argsort(-times, kind="stable")
    ts, es, xs = times[order], events[order], x[order]
    lp = xs @ beta
    lp -= lp.max()  # guard against overflow; Breslow terms are scale-free
    w = np.exp(lp)
    cum_s0 = np.cumsum(w)
    cum_s1 = np.cumsum(w[:, None] * xs, axis=0)
    cum_s2 = np.cumsum(w[:, None, None] * (xs[:, :, None] * xs[:, None, :]), axis=0)
    # group_end[i]: last index sharing ts[i] (ties are contiguous when descending)
    group_end = np.searchsorted(-ts, -ts, side="right") - 1
    ev = np.flatnonzero(es == 1)
    if ev.size == 0:
        p = x.shape[1]
        return 0.0, np.zeros(p), np.zeros((p, p))
    ge = group_end[ev]
    s0 = cum_s0[ge]
    s1 = cum_s1[ge]
    s2 = cum_s2[ge]
    xbar = s1 / s0[:, None]
    loglik = float(lp[ev].sum() - np.log(s0).sum())
    score = (xs[ev] - xbar).sum(axis=0)
    info = (s2 / s0[:, None, None] - xbar[:, :, None] * xbar[:, None, :]).sum(axis=0)
    return loglik, score, info


def coxph_fit(times, events, x, names=None, max_iter: int = 50, tol: float = 1e-8) -> CoxFit:
    """Newton-Raphson on the Breslow partial likelihood.

    Convergence is declared at |step|_inf < tol; monotone-likelihood style
    divergence (exploding coefficients or singular information) raises
    ConvergenceError with a diagnostic.
    """
    times, events = _clean(times, events)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] != times.size:
        x = x.T
    if x.shape[0] != times.size:
        raise DataError("covariate matrix does not align with times")
    p = x.shape[1]
    if names is None:
        names = [f"x{i}" for i in range(p)]
    if int(events.sum()) < p:
        raise DataError(f"{int(events.sum())} events cannot support {p} covariates")
    sd = x.std(axis=0)
    if np.any(sd == 0):
        raise DataError("constant covariate")
    if events.sum() == 0:
        raise UndefinedError("no events")

    beta = np.zeros(p)
    loglik_null, _, _ = _cox_quantities(beta, times, events, x)
    loglik = loglik_null
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        ll, score, info = _cox_quantities(beta, times, events, x)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular information matrix at iteration {n_iter}") from exc
        # halve the step until the likelihood does not decrease
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            ll_new, _, _ = _cox_quantities(cand, times, events, x)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        else:
            raise ConvergenceError("step halving failed; likelihood may be monotone")
        beta = beta + scale * step
        loglik = ll_new
        if np.abs(beta).max() > 80:
            raise ConvergenceError("coefficients diverging; monotone likelihood suspected")
        if np.abs(scale * step).max() < tol:
            break
    else:
        raise ConvergenceError(f"no convergence in {max_iter} iterations")

    ll, score, info = _cox_quantities(beta, times, events, x)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("information matrix not invertible at the optimum") from exc
    se = np.sqrt(np.diag(cov))
    z = beta / se
    wald_p = 2.0 * stats.norm.sf(np.abs(z))

    # Breslow baseline cumulative hazard at x = 0
    lp = x @ beta
    w = np.exp(lp)
    event_times = np.unique(times[events == 1])
    jumps = np.empty(event_times.size)
    for k, t in enumerate(event_times):
        jumps[k] = np.sum((times == t) & (events == 1)) / np.sum(w[times >= t])
    return CoxFit(
        names=list(names),
        beta=beta,
        se=se,
        wald_p=wald_p,
        hr=np.exp(beta),
        loglik=float(ll),
        loglik_null=float(loglik_null),
        baseline_times=event_times,
        baseline_cumhaz=np.cumsum(jumps),
        converged=True,
        n_iter=n_iter,
        score_norm=float(np.abs(score).max()),
        x_mean=x.mean(axis=0),
    )


@dataclass
class UnivariableRow:
    name: str
    beta: float
    hr: float
    se: float
    p: float
    error: str | None = None


def multivariable_pipeline(times, events, variables: dict[str, np.ndarray], promote_p: float = 0.05):
    """Univariable Cox per variable, then a joint fit of those with p < 0.05.

    Returns (univariable rows, joint CoxFit or None). The promotion threshold
    is strict: p exactly equal to the cut is excluded.
    """
    if not variables:
        raise DataError("no variables supplied")
    rows: list[UnivariableRow] = []
    promoted: list[str] = []
    for name, values in variables.items():
        try:
            fit = coxph_fit(times, events, np.asarray(values, dtype=np.float64).reshape(-1, 1), [name])
            rows.append(UnivariableRow(name, float(fit.beta[0]), float(fit.hr[0]), float(fit.se[0]), float(fit.wald_p[0])))
            if fit.wald_p[0] < promote_p:
                promoted.append(name)
        except (ConvergenceError, DataError, UndefinedError) as exc:
            rows.append(UnivariableRow(name, np.nan, np.nan, np.nan, np.nan, error=str(exc)))
    if not promoted:
        return rows, None
    xmat = np.column_stack([np.asarray(variables[n], dtype=np.float64) for n in promoted])
    joint = coxph_fit(times, events, xmat, promoted)
    return rows, joint


# -- time-dependent ROC -------------------------------------------------------------


def timeroc_auc(marker, times, events, horizon: float) -> float:
    """Cumulative/dynamic AUC at ``horizon`` with IPCW weights.

    Cases are subjects with an event at or before the horizon, controls those
    still under observation past it; weights come from the Kaplan-Meier
    estimate of the censoring distribution. With no censoring this is exactly
    the Mann-Whitney statistic of cases versus controls.
    """
    marker = np.asarray(marker, dtype=np.float64)
    times, events = _clean(times, events)
    if marker.shape != times.shape:
        raise DataError("marker misaligned with times")
    cases = (times <= horizon) & (events == 1)
    controls = times > horizon
    if not cases.any() or not controls.any():
        raise UndefinedError(f"no cases or no controls at horizon {horizon}")
    cens_km = km_fit(times, 1 - events)
    g_cases = cens_km.survival_at(times[cases], left=True)
    g_horizon = float(cens_km.survival_at(horizon))
    if g_horizon <= 0 or np.any(g_cases <= 0):
        raise UndefinedError("censoring survival hits zero before the horizon")
    w_cases = 1.0 / np.asarray(g_cases)
    w_control = 1.0 / g_horizon

    m_cases = marker[cases]
    m_controls = np.sort(marker[controls])
    n_c = m_controls.size
    below = np.searchsorted(m_controls, m_cases, side="left")
    upto = np.searchsorted(m_controls, m_cases, side="right")
    wins = below + 0.5 * (upto - below)
    num = float(np.sum(w_cases * wins) * w_control)
    den = float(w_cases.sum() * n_c * w_control)
    return num / den


# -- RMST -----------------------------------------------------------------------------


@dataclass(frozen=True)
class RmstResult:
    value: float
    var: float
    tau: float
    extrapolated: bool


def rmst(times, events, tau: float) -> RmstResult:
    """Area under the KM curve on [0, tau], with the usual variance estimate.

    Beyond the last observed time the curve is held at its final value and
    the result is flagged as extrapolated.
    """
    if tau <= 0:
        raise DataError("tau must be positive")
    times, events = _clean(times, events)
    km = km_fit(times, events)
    extrapolated = tau > times.max()
    grid = km.times[km.times <= tau]
    surv = km.surv[: grid.size]
    starts = np.concatenate([[0.0], grid])
    survs = np.concatenate([[1.0], surv])
    ends = np.concatenate([grid, [tau]])
    ends = np.minimum(ends, tau)
    area = float(np.sum(survs * np.maximum(ends - starts, 0.0)))

    var = 0.0
    for k, t in enumerate(grid):
        n_k, d_k = km.n_at_risk[k], km.n_events[k]
        if n_k == d_k:
            continue
        tail_starts = np.maximum(starts, t)
        tail = float(np.sum(survs * np.maximum(ends - tail_starts, 0.0)))
        var += tail * tail * d_k / (n_k * (n_k - d_k))
    return RmstResult(value=area, var=var, tau=float(tau), extrapolated=extrapolated)


@dataclass(frozen=True)
class RmstComparison:
    rmst_a: RmstResult
    rmst_b: RmstResult
    diff: float
    lci: float
    uci: float
    p: float


def rmst_compare(times_a, events_a, times_b, events_b, tau: float) -> RmstComparison:
    """Difference in restricted means with a Greenwood-based normal CI."""
    ra = rmst(times_a, events_a, tau)
    rb = rmst(times_b, events_b, tau)
    diff = ra.value - rb.value
    se = float(np.sqrt(ra.var + rb.var))
    if se == 0:
        p = 1.0 if diff == 0 else 0.0
        return RmstComparison(ra, rb, diff, diff, diff, p)
    z = diff / se
    half = 1.959963984540054 * se
    return RmstComparison(ra, rb, diff, diff - half, diff + half, float(2.0 * stats.norm.sf(abs(z))))


# -- bootstrap AUC comparison ----------------------------------------------------------


@dataclass(frozen=True)
class BootstrapAucResult:
    delta: float
    lci: float
    uci: float
    auc_a: float
    auc_b: float
    n_boot: int
    n_redrawn: int


def bootstrap_auc_compare(
    marker_a, marker_b, times, events, horizon: float, n_boot: int = 500, seed: int = 0
) -> BootstrapAucResult:
    """Paired bootstrap of AUC(a) - AUC(b) with a percentile 95% CI.

    Patients are resampled with replacement; degenerate resamples (no cases
    or controls at the horizon) are redrawn and counted. Deterministic in
    ``seed``.
    """
    marker_a = np.asarray(marker_a, dtype=np.float64)
    marker_b = np.asarray(marker_b, dtype=np.float64)
    times, events = _clean(times, events)
    if marker_a.shape != times.shape or marker_b.shape != times.shape:
        raise DataError("markers misaligned with times")
    auc_a = timeroc_auc(marker_a, times, events, horizon)
    auc_b = timeroc_auc(marker_b, times, events, horizon)
    rng = substream(seed, "bootstrap")
    n = times.size
    deltas = np.empty(n_boot)
    n_redrawn = 0
    for b in range(n_boot):
        for _ in range(1000):
            idx = rng.integers(0, n, size=n)
            try:
                da = timeroc_auc(marker_a[idx], times[idx], events[idx], horizon)
                db = timeroc_auc(marker_b[idx], times[idx], events[idx], horizon)
            except UndefinedError:
                n_redrawn += 1
                continue
            deltas[b] = da - db
            break
        else:
            raise DegenerateError("bootstrap kept drawing degenerate resamples")
    lci, uci = np.percentile(deltas, [2.5, 97.5], method="linear")
    return BootstrapAucResult(
        delta=auc_a - auc_b, lci=float(lci), uci=float(uci),
        auc_a=auc_a, auc_b=auc_b, n_boot=n_boot, n_redrawn=n_redrawn,
    )


# -- stratification ---------------------------------------------------------------------


def median_stratify(risks) -> np.ndarray:
    """Labels 'high' for risk strictly above the median, 'low' otherwise."""
    risks = np.asarray(risks, dtype=np.float64)
    if risks.size < 2:
        raise DataError("need at least 2 patients to stratify")
    if np.all(risks == risks[0]):
        raise DegenerateError("all risks identical; median split undefined")
    med = float(np.median(risks))
    return np.where(risks > med, "high", "low")


# -- calibration --------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationPoint:
    mean_predicted: float
    observed: float
    lci: float
    uci: float
    n: int


def calibration_curve(predicted_surv, times, events, horizon: float, n_groups: int = 10):
    """Grouped calibration: decile bins of predicted survival vs KM observed.

    Returns (points, n_skipped); groups that are empty or have no usable KM
    estimate at the horizon are skipped and counted.
    """
    pred = np.asarray(predicted_surv, dtype=np.float64)
    times, events = _clean(times, events)
    if pred.shape != times.shape:
        raise DataError("predictions misaligned with times")
    if np.any((pred < 0) | (pred > 1)):
        raise DataError("predicted survival probabilities must lie in [0, 1]")
    bounds = np.unique(np.quantile(pred, np.linspace(0, 1, n_groups + 1), method="linear"))
    if bounds.size == 1:  # constant predictions: one group
        groups = [np.arange(pred.size)]
    else:
        which = np.clip(np.searchsorted(bounds, pred, side="right") - 1, 0, bounds.size - 2)
        groups = [np.flatnonzero(which == g) for g in range(bounds.size - 1)]
    points: list[CalibrationPoint] = []
    skipped = 0
    for idx in groups:
        if idx.size == 0:
            skipped += 1
            continue
        km = km_fit(times[idx], events[idx])
        observed = float(km.survival_at(horizon))
        var = km.var_at(horizon)
        if not np.isfinite(var):
            skipped += 1
            continue
        half = 1.959963984540054 * np.sqrt(var)
        points.append(
            CalibrationPoint(
                mean_predicted=float(pred[idx].mean()),
                observed=observed,
                lci=max(0.0, observed - half),
                uci=min(1.0, observed + half),
                n=int(idx.size),
            )
        )
    return points, skipped


# -- decision curves -------------------------------------------------------------------------


@dataclass(frozen=True)
class DcaPoint:
    threshold: float
    net_benefit: float
    treat_all: float
    treat_none: float


def dca_curve(predicted_event_prob, times, events, horizon: float, thresholds) -> list[DcaPoint]:
    """Net benefit NB(p) = TP/n - FP/n * p/(1-p) with KM-estimated outcomes.

    Predicted-positive means predicted event probability strictly above the
    threshold; thresholds at or above 1 (or at/below 0) are skipped.
    """
    pred = np.asarray(predicted_event_prob, dtype=np.float64)
    times, events = _clean(times, events)
    if pred.shape != times.shape:
        raise DataError("predictions misaligned with times")
    n = times.size
    km_all = km_fit(times, events)
    prevalence = 1.0 - float(km_all.survival_at(horizon))
    out: list[DcaPoint] = []
    for p in np.asarray(thresholds, dtype=np.float64):
        if not (0.0 < p < 1.0):
            continue
        odds = p / (1.0 - p)
        positive = pred > p
        if positive.any():
            km_pos = km_fit(times[positive], events[positive])
            event_frac = 1.0 - float(km_pos.survival_at(horizon))
            frac_pos = positive.mean()
            nb = event_frac * frac_pos - (1.0 - event_frac) * frac_pos * odds
        else:
            nb = 0.0
        treat_all = prevalence - (1.0 - prevalence) * odds
        out.append(DcaPoint(float(p), float(nb), float(treat_all), 0.0))
    return out


# -- nomogram ----------------------------------------------------------------------------------


@dataclass
class NomogramModel:
    """Points-based rendering of a Cox fit.

    Each variable's zero-point is its lowest-risk range end, the largest
    effect spans 0..100 points, and total points map monotonically onto the
    linear predictor, so survival probabilities are exact, not read off a
    chart.
    """

    names: list[str]
    beta: np.ndarray
    ranges: dict[str, tuple[float, float]]
    refs: np.ndarray
    scale: float  # lp units per 100 points
    fit: CoxFit

    def points_for(self, name: str, value: float) -> float:
        i = self.names.index(name)
        lo, hi = self.ranges[name]
        if not (lo <= value <= hi):
            raise RangeError(f"{name}={value} outside declared range [{lo}, {hi}]")
        return 100.0 * self.beta[i] * (value - self.refs[i]) / self.scale

    def survival_at_reference(self, horizon: float) -> float:
        lp_ref = float(self.refs @ self.beta)
        return float(np.exp(-self.fit.cumhaz_at(horizon) * np.exp(lp_ref)))

    def survival_for_points(self, total_points: float, horizon: float) -> float:
        lp_from_ref = self.scale * total_points / 100.0
        return float(self.survival_at_reference(horizon) ** np.exp(lp_from_ref))

    def points_table(self, horizons, max_points: float = 0.0, step: float = 10.0):
        if max_points <= 0:
            max_points = sum(
                max(self.points_for(n, self.ranges[n][0]), self.points_for(n, self.ranges[n][1]))
                for n in self.names
            )
        grid = np.arange(0.0, max_points + step / 2, step)
        return [
            {"total_points": float(p), **{f"s@{h}": self.survival_for_points(p, h) for h in horizons}}
            for p in grid
        ]


def nomogram_build(fit: CoxFit, ranges: dict[str, tuple[float, float]]) -> NomogramModel:
    """Build the points mapping from a converged Cox fit and variable ranges."""
    if not fit.converged:
        raise DataError("nomogram requires a converged Cox fit")
    missing = [n for n in fit.names if n not in ranges]
    if missing:
        raise DataError(f"ranges missing for {missing}")
    spans = []
    refs = np.empty(len(fit.names))
    for i, name in enumerate(fit.names):
        lo, hi = ranges[name]
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
            raise DataError(f"bad range for {name}: ({lo}, {hi})")
        spans.append(abs(fit.beta[i]) * (hi - lo))
        refs[i] = lo if fit.beta[i] >= 0 else hi  # lowest-risk end scores 0 points
    scale = max(spans)
    if scale <= 0:
        raise DataError("no variable has a nonzero effect over its range")
    return NomogramModel(
        names=list(fit.names), beta=fit.beta.copy(),
        ranges={n: (float(lo), float(hi)) for n, (lo, hi) in ranges.items()},
        refs=refs, scale=float(scale), fit=fit,
    )


def nomogram_score(model: NomogramModel, covariates: dict[str, float], horizons) -> tuple[float, dict[float, float]]:
    """Total points and survival probabilities at the requested horizons."""
    missing = [n for n in model.names if n not in covariates]
    if missing:
        raise DataError(f"covariates missing for {missing}")
    total = sum(model.points_for(n, float(covariates[n])) for n in model.names)
    survs = {float(h): model.survival_for_points(total, float(h)) for h in horizons}
    return float(total), survs
