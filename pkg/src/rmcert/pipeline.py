"""End-to-end certification run and its CSV/JSON artifacts.

Output files (fixed names inside the output directory)::

    config.json  state.json  dataset.json  correlators.csv  estimate.json
    boundary_r{r}.csv  point.csv  batch_cloud.csv  phase_histogram.csv  report.json

``dataset.json`` is only written up to ``DATASET_JSON_LIMIT`` settings.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .boundary import boundary_curves, certify_point
from .correlation import certify_from_tracenorm, cross_correlation, direct_moments, trace_norm
from .errors import RmcertError, ShapeError, StageError
from .qudit import DensityMatrix, max_entangled_state, product_state
from .randmeas import (
    Observable,
    SettingRecord,
    _draw_counts,
    correlators,
    estimate_moments,
    outcome_probabilities,
    setting_unitaries,
    simulate_correlators,
)
from .sampling import TAG_COUNTS, SeededStream, dephased_state, random_phase_many
from .witness import dft_certify, dft_correlator

log = logging.getLogger(__name__)

DATASET_JSON_LIMIT = 5000

# stream tags used only by the pipeline
TAG_STATE = 10
TAG_CLOUD = 20
TAG_HIST = 30
TAG_SWEEP = 40


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, (RmcertError, ValueError, ArithmeticError, OSError)):
            raise StageError(self.name, exc) from exc
        return False


@dataclass(eq=False)
class PipelineResult:
    report: dict
    state: DensityMatrix
    estimate: object
    curves: list
    correlators: np.ndarray
    cloud: np.ndarray = None
    histogram: tuple = None


def _derived_seed(seed, tag):
    return int(SeededStream(seed).child(tag).generator().integers(0, 2**63 - 1))


def build_state(config):
    d = config.d
    if config.state == "mes":
        return max_entangled_state(d)
    if config.state == "dephased":
        return dephased_state(d, config.phimax, config.dephasing_n, SeededStream(config.seed).child(TAG_STATE))
    if config.state == "product":
        g = SeededStream(config.seed).child(TAG_STATE).generator()
        a, b = (g.standard_normal(d) + 1j * g.standard_normal(d) for _ in range(2))
        return product_state(a, b)
    rho = io.load_state(config.state_file)
    if rho.dim_a != d or rho.dim_b != d:
        raise ShapeError(f"state file is {rho.dim_a}x{rho.dim_b}, config says d={d}")
    return rho


def simulate_dataset(rho, config, observable):
    """Settings of the configured experiment as records (counts or exact ``x``).

    Uses the same streams as :func:`simulate_correlators`, so the record
    correlators equal the simulated ones.
    """
    d, n = config.d, config.n_unitaries
    ua, ub = setting_unitaries(d, config.seed, 0, n, config.phase_noise)
    if config.n_events is None:
        xs = correlators(rho, ua, ub, observable)
        records = [SettingRecord(ua[i], ub[i], x=float(xs[i])) for i in range(n)]
    else:
        p = outcome_probabilities(rho, ua, ub)
        cs = SeededStream(config.seed).child(TAG_COUNTS)
        records = [SettingRecord(ua[i], ub[i], counts=_draw_counts(p[i], config.n_events, cs.at(i))) for i in range(n)]
    meta = {"seed": config.seed, "n_events": config.n_events, "phase_noise": config.to_dict()["phase_noise"], "state": config.state}
    return io.RandomizedDataset(d, observable, records, meta)


def phase_noise_histogram(rho, config, observable, draws, bins):
    """2D histogram of ``(S2, S4)`` over fresh random-phase sets on fixed settings.

    Returns ``(counts, s2_edges, s4_edges, samples)``.
    """
    d, n = config.d, config.n_unitaries
    ua, ub = setting_unitaries(d, config.seed, 0, n)
    pr = config.phase_noise or (0.0, 2 * np.pi)
    base = SeededStream(config.seed).child(TAG_HIST)
    ids = range(n)
    samples = np.empty((draws, 2))
    for j in range(draws):
        # random_phase_many indexes settings through the stream id, so the draw goes in the tag
        pa = random_phase_many(d, base.child(j, 0), ids, pr)
        pb = random_phase_many(d, base.child(j, 1), ids, pr)
        est = estimate_moments(correlators(rho, ua * pa[:, None, :], ub * pb[:, None, :], observable), d, config.kappa4)
        samples[j] = est.s2, est.s4
    counts, e2, e4 = np.histogram2d(samples[:, 0], samples[:, 1], bins=bins)
    return counts.astype(np.int64), e2, e4, samples


def _report_config(config):
    out = config.to_dict()
    out.pop("workers")  # does not affect results
    return out


def run_pipeline(config, out_dir=None):
    """Run all stages; write artifacts to ``out_dir`` when given."""
    with _stage("state"):
        rho = build_state(config)
        obs = Observable.from_spec(config.d, config.observable)
    with _stage("sample"):
        if config.dataset_file:
            ds = io.ingest(config.dataset_file)
            if ds.d != config.d:
                raise ShapeError(f"dataset is for d={ds.d}, config says d={config.d}")
            obs = ds.observable
            xs = ds.correlators()
        else:
            ds = None
            xs = simulate_correlators(
                rho, config.n_unitaries, config.seed, obs, config.phase_noise, config.n_events, config.workers
            )
    with _stage("estimate"):
        est = estimate_moments(xs, config.d, config.kappa4)
    with _stage("boundary"):
        curves = boundary_curves(config.d, config.grid_size)
    with _stage("certify"):
        rep = certify_point(est, config.d, curves, config.k_sigma, config.rule)
    with _stage("reference"):
        X = cross_correlation(rho)
        exact = direct_moments(X)
        tn = trace_norm(X)
        ref = {
            "s2": exact.s2,
            "s4": exact.s4,
            "trace_norm": tn,
            "tracenorm_certified": certify_from_tracenorm(tn, config.d),
        }
        c = dft_correlator(rho)
        ref["dft_correlator"] = c
        ref["dft_certified"] = dft_certify(min(max(c, 0.0), 2.0), config.d)
    cloud = None
    with _stage("batches"):
        if config.n_batches and config.dataset_file is None:
            bs = config.effective_batch_size
            cxs = simulate_correlators(
                rho, bs * config.n_batches, _derived_seed(config.seed, TAG_CLOUD), obs, config.phase_noise, config.n_events, config.workers
            )
            batch_est = [estimate_moments(b, config.d, config.kappa4) for b in cxs.reshape(config.n_batches, bs)]
            cloud = np.array([[b.s2, b.s4] for b in batch_est])
    hist = None
    with _stage("histogram"):
        if config.histogram_draws > 0:
            hist = phase_noise_histogram(rho, config, obs, config.histogram_draws, config.histogram_bins)

    report = {
        "config": _report_config(config),
        "observable": [float(v) for v in obs.eigenvalues],
        "estimate": est.to_dict(),
        "certification": rep.to_dict(),
        "reference": ref,
    }
    if cloud is not None:
        cert = [certify_point(b, config.d, curves, config.k_sigma, config.rule).certified_r for b in batch_est]
        vals, cnt = np.unique(cert, return_counts=True)
        report["batch_certified"] = {str(int(v)): int(c) for v, c in zip(vals, cnt)}
    result = PipelineResult(report, rho, est, curves, xs, cloud, hist)
    if out_dir is not None:
        with _stage("write"):
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            io._write_json(config.to_dict(), out / "config.json")
            io.save_state(rho, out / "state.json")
            if ds is None and config.n_unitaries <= DATASET_JSON_LIMIT:
                io.save_dataset(simulate_dataset(rho, config, obs), out / "dataset.json")
            io.write_csv(out / "correlators.csv", ["setting", "x"], ((i, float(x)) for i, x in enumerate(xs)))
            io.save_estimate(est, out / "estimate.json")
            emit_figures(result, out)
            io.save_report(report, out / "report.json")
    return result


def emit_figures(result, out_dir):
    """Write the plottable CSVs: curves, the point with sigmas, the batch cloud
    and the phase-noise histogram (density normalized to its maximum)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StageError("emit", exc) from exc
    paths = []
    for c in result.curves:
        paths.append(c.to_csv(out / f"boundary_r{c.r}.csv"))
    e = result.estimate
    k = result.report["certification"]["k_sigma"]
    paths.append(
        io.write_csv(
            out / "point.csv",
            ["s2", "s4", "sigma_s2", "sigma_s4", "cov_s2_s4", "k_sigma", "certified_r"],
            [(e.s2, e.s4, e.sigma_s2, e.sigma_s4, e.cov_s2_s4, float(k), result.report["certification"]["certified_r"])],
        )
    )
    if result.cloud is not None:
        paths.append(io.write_csv(out / "batch_cloud.csv", ["batch", "s2", "s4"], ((i, p[0], p[1]) for i, p in enumerate(result.cloud))))
    if result.histogram is not None:
        counts, e2, e4, _ = result.histogram
        top = counts.max() if counts.size and counts.max() > 0 else 1
        rows = (
            (e2[i], e2[i + 1], e4[j], e4[j + 1], int(counts[i, j]), counts[i, j] / top)
            for i in range(counts.shape[0])
            for j in range(counts.shape[1])
        )
        paths.append(io.write_csv(out / "phase_histogram.csv", ["s2_lo", "s2_hi", "s4_lo", "s4_hi", "count", "density"], rows))
    return [Path(p) for p in paths]


def noise_sweep(config, widths, n_trials_dft=1):
    """Certification versus the width ``w`` of per-setting phase noise on ``[-w/2, w/2]``.

    Each row also carries the DFT-witness value of the state with one fresh
    set of local phases of the same width (mean over ``n_trials_dft`` draws).
    """
    from .qudit import apply_local
    from .sampling import random_phase_unitary

    rho = build_state(config)
    obs = Observable.from_spec(config.d, config.observable)
    curves = boundary_curves(config.d, config.grid_size)
    rows = []
    for i, w in enumerate(widths):
        pr = None if w <= 0 else (-w / 2, w / 2)
        xs = simulate_correlators(rho, config.n_unitaries, config.seed, obs, pr, config.n_events, config.workers)
        est = estimate_moments(xs, config.d, config.kappa4)
        rep = certify_point(est, config.d, curves, config.k_sigma, config.rule)
        dft = []
        for t in range(n_trials_dft):
            if pr is None:
                dft.append(dft_correlator(rho))
                continue
            s = SeededStream(config.seed).child(TAG_SWEEP, i, t)
            noisy = apply_local(rho, random_phase_unitary(config.d, s.child(0), pr), random_phase_unitary(config.d, s.child(1), pr))
            dft.append(dft_correlator(noisy))
        rows.append(
            {
                "width": float(w),
                "s2": est.s2,
                "s4": est.s4,
                "sigma_s2": est.sigma_s2,
                "sigma_s4": est.sigma_s4,
                "certified_r": rep.certified_r,
                "dft_correlator": float(np.mean(dft)),
            }
        )
    return rows
