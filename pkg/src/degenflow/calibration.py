"""Calibration lab for drift-plus-martingale exit estimates.

Processes Z(t) = nu t + M(t) are simulated with M either a Brownian
motion run at the maximal variance rate A or a bounded-oscillation
member whose variance rate alternates between a and A on unit time
intervals.  Closed-form laws (Wald mean, drifted running-maximum,
gambler's ruin, reflection principle, arcsine law) double as oracles
for the integrator step size: every check is a one-sided comparison at
three standard errors.
"""

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - py310
    import tomli as tomllib

from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.stats import norm

from .errors import BadParameters

_CHUNK = 512  # steps between compactions of the active path set


@dataclass
class DriftMartingaleLab:
    """Parameter bundle for Z(t) = nu t + M(t) exit experiments."""

    nu: float
    A: float
    z_star: float
    z_low: float = -np.inf
    a: float = 0.0
    n_paths: int = 4000
    dt: float = 1e-3
    seed: int = 0
    variance: str = "brownian"  # or "oscillating"

    def __post_init__(self):
        if not (self.A >= self.a >= 0):
            raise BadParameters("need A >= a >= 0")
        if not (self.z_low < 0 < self.z_star):
            raise BadParameters("need z_low < 0 < z_star")
        if self.variance == "oscillating" and self.a <= 0:
            raise BadParameters("oscillating variance needs a > 0")


def _rate(lab, t):
    if lab.variance == "brownian":
        return lab.A
    return lab.a if int(t) % 2 == 0 else lab.A


def exit_statistics(lab, horizon):
    """First-passage samples for both thresholds of a lab process.

    Returns tau_star / tau_low sample arrays (inf where the threshold
    was not reached before the horizon), which-side indicators for the
    two-sided exit, running-sup samples of |M|, and the cap-hit count.
    """
    rng = np.random.default_rng(lab.seed)
    n = lab.n_paths
    z = np.zeros(n)
    m = np.zeros(n)
    m_star = np.zeros(n)
    tau_star = np.full(n, np.inf)
    tau_low = np.full(n, np.inf)
    idx = np.arange(n)
    n_steps = int(round(horizon / lab.dt))
    sq = np.sqrt(lab.dt)
    t = 0.0
    for start in range(0, n_steps, _CHUNK):
        for j in range(start, min(start + _CHUNK, n_steps)):
            dm = np.sqrt(_rate(lab, t)) * sq * rng.standard_normal(idx.size)
            m += dm
            z += lab.nu * lab.dt + dm
            t += lab.dt
            np.maximum(m_star, np.abs(m), out=m_star)
            up = z >= lab.z_star
            tau_star[idx[up & ~np.isfinite(tau_star[idx])]] = t
            dn = z <= lab.z_low
            tau_low[idx[dn & ~np.isfinite(tau_low[idx])]] = t
        # drop paths that have resolved both exits to keep steps cheap
        live = ~(np.isfinite(tau_star[idx]) | np.isfinite(tau_low[idx]))
        if lab.nu < 0 and not np.isfinite(lab.z_low):
            # once far below the target the remaining escape mass is
            # below exp(-2 |nu| (z* - z) / A), negligible at -12
            live &= z > -12.0 + lab.z_star
        if not np.any(live):
            break
        if live.size - np.count_nonzero(live) > live.size // 4:
            idx, z, m, m_star = idx[live], z[live], m[live], m_star[live]
            live = np.ones(idx.size, dtype=bool)
    side = np.where(
        tau_star <= tau_low, 1, np.where(np.isfinite(tau_low), -1, 0)
    )
    side[~np.isfinite(tau_star) & ~np.isfinite(tau_low)] = 0
    capped = int(np.sum(~np.isfinite(np.minimum(tau_star, tau_low))))
    return {
        "tau_star": tau_star,
        "tau_low": tau_low,
        "side": side,
        "m_star_final": m_star,
        "capped": capped,
        "horizon": horizon,
    }


def check_exponential_martingale(lab, t, z, n_paths=None):
    """Empirical tail of the running sup of |M| against the
    exponential-martingale bound 2 exp(-z^2 / (2 A t))."""
    n = n_paths or lab.n_paths
    rng = np.random.default_rng(lab.seed + 1)
    m = np.zeros(n)
    m_star = np.zeros(n)
    n_steps = int(round(t / lab.dt))
    sq = np.sqrt(lab.dt)
    tt = 0.0
    for _ in range(n_steps):
        m += np.sqrt(_rate(lab, tt)) * sq * rng.standard_normal(n)
        tt += lab.dt
        np.maximum(m_star, np.abs(m), out=m_star)
    tail = float(np.mean(m_star > z))
    se = float(np.sqrt(max(tail * (1 - tail), 1.0 / n) / n))
    bound = 2.0 * np.exp(-(z**2) / (2 * lab.A * t)) if z > 0 else 2.0
    oracle = 2.0 * (1.0 - norm.cdf(z / np.sqrt(lab.A * t)))
    return {
        "tail": tail,
        "se": se,
        "bound": float(bound),
        "one_sided_oracle": float(oracle),
        "passed": bool(tail <= bound + 3 * se),
    }


def ruin_probability(nu, A, z_star, z_low):
    """P{Z hits z_star before z_low} from 0 for the Brownian member.

    The scale function of drifted Brownian motion is exp(-2 nu z / A);
    nu = 0 reduces to the classic gambler's-ruin ratio.
    """
    if nu == 0:
        return -z_low / (z_star - z_low)
    q = 2 * nu / A
    return float(np.expm1(-q * z_low) / (np.expm1(-q * z_low) - np.expm1(-q * z_star)))


# --------------------------------------------------------------------------
# planar strip processes
# --------------------------------------------------------------------------


def _strip_exit_times(nu_left, nu_right, b, y_low, y_star, r, A, n_paths, dt,
                      horizon, seed, x0=0.05):
    """Exit times of (Y1, X2) from (y_low, y_star) x [0, r).

    Y1 drifts at nu_left below -b and nu_right above b (zero inside);
    X2 is a small logistic diffusion started at x0.  Returns the exit
    time samples (horizon value where capped) and the capped count.
    """
    rng = np.random.default_rng(seed)
    y = np.zeros(n_paths)
    x = np.full(n_paths, x0)
    out = np.full(n_paths, np.inf)
    idx = np.arange(n_paths)
    n_steps = int(round(horizon / dt))
    sq = np.sqrt(dt)
    sA = np.sqrt(A)
    t = 0.0
    for start in range(0, n_steps, _CHUNK):
        for _ in range(start, min(start + _CHUNK, n_steps)):
            drift = np.where(y < -b, nu_left, np.where(y > b, nu_right, 0.0))
            y += drift * dt + sA * sq * rng.standard_normal(idx.size)
            g = x * (1 - x)
            x += 0.2 * g * dt + 0.3 * g * sq * rng.standard_normal(idx.size)
            np.clip(x, 0.0, 1.0, out=x)
            t += dt
            done = (y <= y_low) | (y >= y_star) | (x >= r)
            out[idx[done & ~np.isfinite(out[idx])]] = t
        live = ~np.isfinite(out[idx])
        if not np.any(live):
            break
        if live.size - np.count_nonzero(live) > live.size // 4:
            idx, y, x = idx[live], y[live], x[live]
    capped = int(np.sum(~np.isfinite(out)))
    return np.where(np.isfinite(out), out, horizon), capped


# --------------------------------------------------------------------------
# inequality suite over the manifest
# --------------------------------------------------------------------------


def load_manifest(path=None):
    if path is not None:
        with open(path, "rb") as fh:
            return tomllib.load(fh)["check"]
    raw = resources.files("degenflow").joinpath("data/calibration_manifest.toml")
    return tomllib.loads(raw.read_text())["check"]


def _lab_from(entry, seed):
    return DriftMartingaleLab(
        nu=entry["nu"],
        A=entry["A"],
        z_star=entry.get("z_star", 1.0),
        z_low=entry.get("z_low", -np.inf),
        a=entry.get("a", 0.0),
        n_paths=entry["n_paths"],
        dt=entry["dt"],
        seed=seed,
        variance=entry.get("variance", "brownian"),
    )


def _mean_se(x):
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(len(x)))


def _prob_se(p, n):
    return float(np.sqrt(max(p * (1 - p), 1.0 / n) / n))


def check_exit_bounds_suite(manifest=None, seed=0):
    """Run every inequality in the manifest; failures are red rows."""
    entries = manifest if manifest is not None else load_manifest()
    rows = []
    for i, e in enumerate(entries):
        kind = e["kind"]
        rows.append(_CHECKS[kind](e, seed + 101 * i))
    return rows


def _check_mean_equals(e, seed):
    lab = _lab_from(e, seed)
    st = exit_statistics(lab, e["horizon"])
    mean, se = _mean_se(st["tau_star"][np.isfinite(st["tau_star"])])
    target = e["z_star"] / e["nu"]
    return {
        "name": e["name"],
        "statistic": mean,
        "se": se,
        "target": target,
        "capped": st["capped"],
        "passed": bool(abs(mean - target) <= 3 * se),
    }


def _check_prob_upper(e, seed):
    lab = _lab_from(e, seed)
    st = exit_statistics(lab, e["horizon"])
    cut = e["kappa"] * e["z_star"] / e["nu"]
    p = float(np.mean(st["tau_star"] <= cut))
    bound = 2 * np.exp(-e["nu"] * (1 - e["kappa"]) ** 2 * e["z_star"] / (2 * e["A"] * e["kappa"]))
    se = _prob_se(p, lab.n_paths)
    return {"name": e["name"], "statistic": p, "se": se, "bound": float(bound),
            "capped": st["capped"], "passed": bool(p <= bound + 3 * se)}


def _check_prob_upper_late(e, seed):
    lab = _lab_from(e, seed)
    st = exit_statistics(lab, e["horizon"])
    cut = e["z_star"] / (e["kappa"] * e["nu"])
    p = float(np.mean(st["tau_star"] > cut))
    bound = 2 * np.exp(-e["nu"] * (1 - e["kappa"]) ** 2 * e["z_star"] / (2 * e["A"] * e["kappa"]))
    se = _prob_se(p, lab.n_paths)
    return {"name": e["name"], "statistic": p, "se": se, "bound": float(bound),
            "capped": st["capped"], "passed": bool(p <= bound + 3 * se)}


def _check_exp_moment(e, seed):
    lab = _lab_from(e, seed)
    st = exit_statistics(lab, e["horizon"])
    tau = st["tau_star"][np.isfinite(st["tau_star"])]
    alpha = 0.5
    for _ in range(30):
        stat = float(np.mean(np.exp(alpha * tau)))
        bound = np.exp(2 * alpha * e["z_star"] / e["nu"]) + 2
        if stat <= bound:
            break
        alpha /= 2
    se = float(np.std(np.exp(alpha * tau), ddof=1) / np.sqrt(len(tau)))
    return {"name": e["name"], "statistic": stat, "se": se, "bound": float(bound),
            "alpha": alpha, "capped": st["capped"],
            "passed": bool(stat <= bound + 3 * se and alpha > 0)}


def _check_escape_prob(e, seed):
    lab = _lab_from(e, seed)
    exact = float(np.exp(-2 * abs(e["nu"]) * e["z_star"] / e["A"]))
    out = {"name": e["name"], "target": exact}
    for key, tag in (("horizon", "statistic"), ("horizon_alt", "statistic_alt")):
        if key not in e:
            continue
        st = exit_statistics(lab, e[key])
        p = float(np.mean(np.isfinite(st["tau_star"])))
        out[tag] = p
        out[tag + "_se"] = _prob_se(p, lab.n_paths)
    out["passed"] = bool(abs(out["statistic"] - exact) <= 3 * out["statistic_se"])
    return out


def _check_side_prob(e, seed):
    lab = _lab_from(e, seed)
    st = exit_statistics(lab, e["horizon"])
    p = float(np.mean(st["side"] == 1))
    se = _prob_se(p, lab.n_paths)
    exact = ruin_probability(e["nu"], e["A"], e["z_star"], e["z_low"])
    row = {"name": e["name"], "statistic": p, "se": se, "target": exact,
           "capped": st["capped"], "passed": bool(abs(p - exact) <= 3 * se)}
    if e["nu"] > 0 and e["z_low"] <= -e["z_star"]:
        row["passed"] = bool(row["passed"] and p >= 0.5)
    return row


def _check_positive_prob(e, seed):
    lab = _lab_from(e, seed)
    st = exit_statistics(lab, e["horizon"])
    p = float(np.mean((st["side"] == 1) & (st["tau_star"] <= 1.0)))
    se = _prob_se(p, lab.n_paths)
    return {"name": e["name"], "statistic": p, "se": se, "bound": 0.0,
            "passed": bool(p - 3 * se > 0)}


def _check_strip_tail(e, seed):
    # outward drift so the exit happens; tails across doubling horizons
    T = e["block"]
    times, capped = _strip_exit_times(
        -e["nu"], e["nu"], e["b"], e["y_low"], e["y_star"], e["r"], e["A"],
        e["n_paths"], e["dt"], 6 * T, seed)
    qs = [float(np.mean(times > k * T)) for k in (1, 2, 3)]
    r1 = qs[1] / max(qs[0], 1e-12)
    r2 = qs[2] / max(qs[1], 1e-12)
    se = _prob_se(qs[2], e["n_paths"]) / max(qs[1], 1e-12)
    return {"name": e["name"], "tails": qs, "ratio_12": r1, "ratio_23": r2,
            "capped": capped,
            "passed": bool(r1 < 1 and r2 <= r1 * 1.5 + 3 * se)}


def _check_strip_trap(e, seed):
    # inward drift outside I traps Y1; early two-sided exit must be rare
    times, _ = _strip_exit_times(
        e["nu"], -e["nu"], e["b"], e["y_low"], e["y_star"], e["r"], e["A"],
        e["n_paths"], e["dt"], e["t_test"], seed)
    p = float(np.mean(times < e["t_test"]))
    se = _prob_se(p, e["n_paths"])
    return {"name": e["name"], "statistic": p, "se": se, "bound": 0.25,
            "passed": bool(p <= 0.25 + 3 * se)}


def _check_strip_linear(e, seed):
    means = []
    ses = []
    for d in (e["depth1"], e["depth2"]):
        times, capped = _strip_exit_times(
            -e["nu"], e["nu"], e["b"], -d, d, e["r"], e["A"], e["n_paths"],
            e["dt"], e["horizon"], seed)
        m, s = _mean_se(times)
        means.append(m)
        ses.append(s)
    ratio = means[1] / means[0]
    scale = e["depth2"] / e["depth1"]
    se = ses[1] / means[0] + ratio * ses[0] / means[0]
    return {"name": e["name"], "means": means, "ratio": ratio,
            "linear_scale": scale,
            "passed": bool(ratio <= 1.5 * scale + 3 * se)}


def _check_strip_one_sided(e, seed):
    means = []
    ses = []
    for y_low in (e["y_low1"], e["y_low2"]):
        times, capped = _strip_exit_times(
            e["nu"], e["nu"], e["b"], y_low, e["y_star"], e["r"], e["A"],
            e["n_paths"], e["dt"], e["horizon"], seed)
        m, s = _mean_se(times)
        means.append(m)
        ses.append(s)
    diff = abs(means[1] - means[0])
    se = np.hypot(ses[0], ses[1])
    return {"name": e["name"], "means": means, "diff": diff,
            "passed": bool(diff <= 3 * se + 0.05 * means[0])}


_CHECKS = {
    "mean_equals": _check_mean_equals,
    "prob_upper": _check_prob_upper,
    "prob_upper_late": _check_prob_upper_late,
    "exp_moment": _check_exp_moment,
    "escape_prob": _check_escape_prob,
    "side_prob": _check_side_prob,
    "positive_prob": _check_positive_prob,
    "strip_tail": _check_strip_tail,
    "strip_trap": _check_strip_trap,
    "strip_linear": _check_strip_linear,
    "strip_one_sided": _check_strip_one_sided,
}


# --------------------------------------------------------------------------
# arcsine occupation example
# --------------------------------------------------------------------------


def arcsine_cdf(u):
    """Distribution function of the arcsine law on [0, 1]."""
    return (2.0 / np.pi) * np.arcsin(np.sqrt(np.clip(u, 0.0, 1.0)))


def arcsine_scenario(seed=0, runs=10000, n_values=10000, long_horizon=1_000_000,
                     window=1000):
    """Occupation-fraction statistics for the nonhyperbolic edge walk.

    The state is a monotone odd function of a random walk, so its sign
    matches the walk's sign; H is the fraction of time spent positive.
    Returns the H samples, the KS distance to the arcsine law, and a
    single-path witness that near-total occupation of either sign
    recurs along one long trajectory.
    """
    rng = np.random.default_rng(seed)
    h = np.empty(runs)
    chunk = max(1, min(runs, 10**7 // n_values))
    done = 0
    while done < runs:
        m = min(chunk, runs - done)
        w = np.cumsum(rng.standard_normal((m, n_values)), axis=1)
        h[done:done + m] = np.mean(w > 0, axis=1)
        done += m
    hs = np.sort(h)
    grid = np.arange(1, runs + 1) / runs
    ks = float(np.max(np.abs(grid - arcsine_cdf(hs))))
    # one long path, windowed occupation fractions
    w = np.cumsum(rng.standard_normal(long_horizon))
    occ = np.mean((w > 0).reshape(-1, window), axis=1)
    return {
        "H": h,
        "ks_distance": ks,
        "window_fractions": occ,
        "max_window": float(np.max(occ)),
        "min_window": float(np.min(occ)),
    }
