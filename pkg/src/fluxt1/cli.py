"""Command-line pipeline: spectrum tables, T1 curves, extraction, statistics.

Subcommands emit CSV for flat series and a single versioned JSON envelope for
structured results; plots are always emitted as plottable data series, never
rendered images. Exit codes: 0 success, 1 usage, 2 data error, 3 numerical
failure; failures also print a machine-readable error JSON on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import sys
import warnings

import numpy as np

from .dynamics import (
    T1Mode,
    build_generator,
    default_time_grid,
    evolve,
    fit_exponential,
    heralded_misassignment_error,
    invert_computational,
    predicted_t1,
    simulate_t1_signal,
    thermal_population,
)
from .errors import DataError, FluxT1Error
from .hamiltonian import FluxBias, diagonalize
from .io import (
    atomic_write_text,
    distribution_to_payload,
    dump_json,
    file_sha256,
    parse_dephasing_csv,
    parse_device_file,
    parse_t1_csv,
    read_distribution,
    write_result,
    result_envelope,
)
from .loss import ANALYSIS_MECHANISMS, Mechanism
from .pipeline import (
    CachedSpectrumProvider,
    QubitAnalysisInput,
    T1Dataset,
    T1Record,
    bin_average,
    exclusion_filter,
    extract_flux_noise_amplitude,
    extract_qceff_dataset,
    fit_epsilon_global,
    summarize,
)
from .stats import ci_of_mean_difference, welch_t_test

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1
        raise _UsageError(message)


def _emit(content: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(content)
    else:
        atomic_write_text(out, content)


def _emit_json(command: str, config: dict, data: dict, out: str | None) -> None:
    if out is None:
        sys.stdout.write(dump_json(result_envelope(command, config, data)))
    else:
        write_result(out, command, config, data)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([x if isinstance(x, str) else repr(float(x)) for x in row])
    return buf.getvalue()


def _flux_grid(args) -> np.ndarray:
    if args.flux is not None:
        return np.array([args.flux])
    return np.linspace(args.flux_start, args.flux_stop, args.flux_points)


def _add_flux_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--flux", type=float, default=None,
                   help="single flux bias in Phi0 units (overrides the grid)")
    p.add_argument("--flux-start", type=float, default=0.0)
    p.add_argument("--flux-stop", type=float, default=0.5)
    p.add_argument("--flux-points", type=int, default=51)


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--levels", type=int, default=6, help="retained circuit levels")
    p.add_argument("--qceff", type=float, default=3.0e5,
                   help="effective capacitive quality factor at 6 GHz")
    p.add_argument("--epsilon", type=float, default=0.25,
                   help="frequency exponent of the quality factor")
    p.add_argument("--xqp", type=float, default=0.0, help="normalized quasiparticle density")
    p.add_argument("--qubit-temp-k", type=float, default=0.040)
    p.add_argument("--res-temp-k", type=float, default=0.065)


def _device_env(args):
    device = parse_device_file(args.device)
    env = device.environment(qc_eff=args.qceff, epsilon=args.epsilon, x_qp=args.xqp)
    if args.qubit_temp_k != env.t_qubit or args.res_temp_k != env.t_res:
        from dataclasses import replace
        env = replace(env, t_qubit=args.qubit_temp_k, t_res=args.res_temp_k)
    return device, device.fluxonium_params(), device.resonator_params(), env


def _cmd_spectrum(args) -> int:
    device = parse_device_file(args.device)
    params = device.fluxonium_params()
    n = args.levels
    header = ["phi_ext_phi0"]
    header += [f"energy_{k}_hz" for k in range(n)]
    header += [f"omega_0{j}_hz" for j in range(1, n)]
    header += [f"abs_n_0{j}" for j in range(1, n)]
    header += [f"abs_phi_0{j}" for j in range(1, n)]
    header += [f"abs_sin_half_0{j}" for j in range(1, n)]
    rows = []
    for phi in _flux_grid(args):
        spec = diagonalize(params, FluxBias(float(phi)), n_levels=n)
        row = [phi]
        row += list(spec.energies)
        row += [spec.energies[j] - spec.energies[0] for j in range(1, n)]
        row += [abs(spec.n_elem[0, j]) for j in range(1, n)]
        row += [abs(spec.phi_elem[0, j]) for j in range(1, n)]
        row += [abs(spec.sin_half_elem[0, j]) for j in range(1, n)]
        rows.append(row)
    _emit(_csv_text(header, rows), args.out)
    return EXIT_OK


_MECHANISM_NAMES = {m.value: m for m in Mechanism}


def _cmd_predict_t1(args) -> int:
    _, params, res, env = _device_env(args)
    mech_tokens = [tok.strip() for tok in args.mechanisms.split(",") if tok.strip()]
    for tok in mech_tokens:
        if tok != "total" and tok not in _MECHANISM_NAMES:
            raise _UsageError(f"unknown mechanism {tok!r}; choose from "
                              f"{sorted(_MECHANISM_NAMES) + ['total']}")
    mode_tokens = [tok.strip() for tok in args.modes.split(",") if tok.strip()]
    mode_map = {"two_level": T1Mode.TWO_LEVEL, "six_level": T1Mode.MULTILEVEL_POPULATION,
                "signal": T1Mode.MULTILEVEL_SIGNAL}
    for tok in mode_tokens:
        if tok not in mode_map:
            raise _UsageError(f"unknown mode {tok!r}; choose from {sorted(mode_map)}")

    rows = []
    for phi in _flux_grid(args):
        bias = FluxBias(float(phi))
        spec2 = diagonalize(params, bias, n_levels=2)
        spec_n = diagonalize(params, bias, n_levels=args.levels)
        omega01 = spec_n.transition_frequency(0, 1)
        for tok in mech_tokens:
            mechanisms = ANALYSIS_MECHANISMS if tok == "total" else (_MECHANISM_NAMES[tok],)
            for mode_tok in mode_tokens:
                mode = mode_map[mode_tok]
                spec = spec2 if mode is T1Mode.TWO_LEVEL else spec_n
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    try:
                        t1 = predicted_t1(params, res, env, bias, mode=mode,
                                          mechanisms=mechanisms, n_levels=args.levels,
                                          spec=spec)
                    except (FluxT1Error, ZeroDivisionError):
                        t1 = float("inf")  # mechanism switched off at this bias
                rows.append([tok, mode_tok, float(phi), omega01, t1])
    _emit(_csv_text(["mechanism", "mode", "phi_ext_phi0", "omega01_hz", "t1_s"], rows),
          args.out)
    return EXIT_OK


def _cmd_simulate_decay(args) -> int:
    _, params, res, env = _device_env(args)
    bias = FluxBias(args.flux)
    spec = diagonalize(params, bias, n_levels=args.levels)
    rm = build_generator(spec, res, env, ANALYSIS_MECHANISMS)
    p0 = invert_computational(thermal_population(spec, env.t_qubit))
    times = default_time_grid(rm, p0, n_points=args.points)
    trace = evolve(rm, p0, times)
    _, signal = simulate_t1_signal(rm, spec, res, env, times)
    fit_p1 = fit_exponential(times, trace.populations[:, 1])
    fit_s = fit_exponential(times, signal)
    err_ground, err_excited = heralded_misassignment_error(rm, spec, env, times)

    if args.trace_out is not None:
        header = ["tau_s", "signal"] + [f"p_{k}" for k in range(rm.n)]
        rows = [[times[k], signal[k], *trace.populations[k]] for k in range(times.size)]
        _emit(_csv_text(header, rows), args.trace_out)

    config = dict(device=args.device, flux=args.flux, levels=args.levels,
                  qceff=args.qceff, epsilon=args.epsilon, xqp=args.xqp,
                  qubit_temp_k=args.qubit_temp_k, res_temp_k=args.res_temp_k,
                  points=args.points)
    data = dict(
        t1_population_s=fit_p1.t1,
        t1_signal_s=fit_s.t1,
        signal_relative_error=(fit_p1.t1 - fit_s.t1) / fit_p1.t1,
        misassignment_to_ground_relative_error=err_ground,
        misassignment_to_excited_relative_error=err_excited,
    )
    _emit_json("simulate-decay", config, data, args.out)
    return EXIT_OK


def _cmd_extract_qceff(args) -> int:
    device, params, res, env = _device_env(args)
    ds = parse_t1_csv(args.t1_csv, qubit_id=device.qubit_id)
    n_raw = len(ds)
    provider = CachedSpectrumProvider(params, n_levels=args.levels)
    if any(r.omega01 is None for r in ds.records):
        filled = [
            r if r.omega01 is not None
            else T1Record(phi_ext=r.phi_ext, t1=r.t1, t1_err=r.t1_err,
                          omega01=provider(r.phi_ext).transition_frequency(0, 1),
                          n_binned=r.n_binned)
            for r in ds.records
        ]
        ds = T1Dataset(records=tuple(filled), qubit_id=ds.qubit_id,
                       n_ingest_dropped=ds.n_ingest_dropped)
    binned = bin_average(ds, bin_width=args.bin_width_hz)
    kept, _dropped = exclusion_filter(binned, provider, env, res,
                                      threshold=args.exclusion_threshold)
    dist = extract_qceff_dataset(kept, provider, res, env,
                                 mode=T1Mode(args.mode), max_workers=args.workers)
    config = dict(device=args.device, t1_csv=args.t1_csv, levels=args.levels,
                  epsilon=args.epsilon, bin_width_hz=args.bin_width_hz,
                  exclusion_threshold=args.exclusion_threshold, mode=args.mode,
                  qubit_temp_k=args.qubit_temp_k, res_temp_k=args.res_temp_k)
    data = distribution_to_payload(dist)
    data.update(n_raw=n_raw, n_binned=len(binned), n_kept=len(kept))
    _emit_json("extract-qceff", config, data, args.out)
    return EXIT_OK


def _cmd_fit_epsilon(args) -> int:
    inputs = []
    for device_path, csv_path in args.qubit:
        device = parse_device_file(device_path)
        ds = parse_t1_csv(csv_path, qubit_id=device.qubit_id)
        provider = CachedSpectrumProvider(device.fluxonium_params(), n_levels=args.levels)
        if any(r.omega01 is None for r in ds.records):
            filled = [
                r if r.omega01 is not None
                else T1Record(phi_ext=r.phi_ext, t1=r.t1, t1_err=r.t1_err,
                              omega01=provider(r.phi_ext).transition_frequency(0, 1))
                for r in ds.records
            ]
            ds = T1Dataset(records=tuple(filled), qubit_id=ds.qubit_id,
                           n_ingest_dropped=ds.n_ingest_dropped)
        ds = bin_average(ds, bin_width=args.bin_width_hz)
        env = device.environment(qc_eff=args.qceff, epsilon=0.0, x_qp=args.xqp)
        kept, _ = exclusion_filter(ds, provider, env, device.resonator_params(),
                                   threshold=args.exclusion_threshold)
        inputs.append(QubitAnalysisInput(dataset=kept, params=device.fluxonium_params(),
                                         res=device.resonator_params(), env=env))
    grid = np.arange(args.grid_start, args.grid_stop + args.grid_step / 2, args.grid_step)
    result = fit_epsilon_global(inputs, mode=T1Mode(args.mode), grid=grid,
                                n_levels=args.levels)
    config = dict(qubits=[list(pair) for pair in args.qubit], levels=args.levels,
                  mode=args.mode, bin_width_hz=args.bin_width_hz,
                  exclusion_threshold=args.exclusion_threshold,
                  grid_start=args.grid_start, grid_stop=args.grid_stop,
                  grid_step=args.grid_step)
    data = dict(
        epsilon=result.epsilon,
        variance_curve=[
            {"epsilon": float(e), "pooled_variance": float(v)}
            for e, v in zip(result.grid, result.pooled_variance)
        ],
    )
    _emit_json("fit-epsilon", config, data, args.out)
    return EXIT_OK


def _cmd_fit_flux_noise(args) -> int:
    device = parse_device_file(args.device)
    ds = parse_dephasing_csv(args.dephasing_csv, qubit_id=device.qubit_id)
    sqrt_a = extract_flux_noise_amplitude(ds, device.fluxonium_params())
    config = dict(device=args.device, dephasing_csv=args.dephasing_csv)
    data = dict(
        sqrt_a_phi_phi0_per_sqrt_hz=sqrt_a,
        sqrt_a_phi_uphi0=sqrt_a * 1e6,
        n_records_used=len(ds.records),
    )
    _emit_json("fit-flux-noise", config, data, args.out)
    return EXIT_OK


def _welch_pairs(dists, alpha: float) -> list[dict]:
    pairs = []
    for d1 in dists:
        for d2 in dists:
            if d1 is d2:
                continue
            result = welch_t_test(d1.values(), d2.values(), alpha=alpha)
            lo_pct, hi_pct = ci_of_mean_difference(result, result.mean2)
            pairs.append(dict(
                id1=d1.qubit_id, id2=d2.qubit_id,
                t0=result.t0, nu=result.nu, p_value=result.p_value,
                ci_low=result.ci_low, ci_high=result.ci_high,
                ci_low_percent_of_mean2=lo_pct, ci_high_percent_of_mean2=hi_pct,
            ))
    return pairs


def _cmd_compare(args) -> int:
    dists = [read_distribution(p) for p in args.dist]
    if len(dists) < 2:
        raise _UsageError("compare needs at least two --dist files")
    config = dict(dists=list(args.dist), alpha=args.alpha)
    data = dict(pairs=_welch_pairs(dists, args.alpha))
    _emit_json("compare", config, data, args.out)
    return EXIT_OK


def _cmd_report(args) -> int:
    import json as _json

    dists = [read_distribution(p) for p in args.dist]
    summaries = []
    for d in dists:
        s = summarize(d)
        summaries.append(dict(qubit_id=d.qubit_id, mean=s.mean, median=s.median,
                              std=s.std, iqr=s.iqr, n=s.n))
    welch_matrix = _welch_pairs(dists, args.alpha) if len(dists) > 1 else []
    provenance = {"sha256": {p: file_sha256(p) for p in args.dist}}
    # echo each input's own extraction configuration alongside ours
    input_configs = {}
    for p in args.dist:
        with open(p, encoding="utf-8") as fh:
            input_configs[p] = _json.load(fh).get("config", {})
    config = dict(dists=list(args.dist), alpha=args.alpha,
                  epsilon_used=[d.epsilon_used for d in dists],
                  input_configs=input_configs)
    data = dict(summaries=summaries, welch_matrix=welch_matrix, provenance=provenance)
    _emit_json("report", config, data, args.out)
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="fluxt1", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="eigenenergies and matrix elements over flux")
    p.add_argument("--device", required=True)
    _add_flux_args(p)
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("predict-t1", help="model T1 curves per mechanism and mode")
    p.add_argument("--device", required=True)
    _add_flux_args(p)
    _add_model_args(p)
    p.add_argument("--mechanisms",
                   default="capacitive,flux_noise,charge_line,flux_line,purcell,total",
                   help="comma list of channels; 'total' sums the analysis set "
                        "(capacitive + flux noise + radiative)")
    p.add_argument("--modes", default="two_level,six_level",
                   help="comma list from two_level, six_level, signal")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_predict_t1)

    p = sub.add_parser("simulate-decay", help="decay signal with resonator pulls")
    p.add_argument("--device", required=True)
    p.add_argument("--flux", type=float, required=True)
    _add_model_args(p)
    p.add_argument("--points", type=int, default=51)
    p.add_argument("--trace-out", default=None, help="CSV path for s(tau) and populations")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_simulate_decay)

    p = sub.add_parser("extract-qceff", help="invert measured T1 into quality factors")
    p.add_argument("--device", required=True)
    p.add_argument("--t1-csv", required=True)
    _add_model_args(p)
    p.add_argument("--bin-width-hz", type=float, default=8e6)
    p.add_argument("--exclusion-threshold", type=float, default=0.1)
    p.add_argument("--mode", default="multilevel_signal",
                   choices=[m.value for m in T1Mode])
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_extract_qceff)

    p = sub.add_parser("fit-epsilon", help="global frequency exponent over qubits")
    p.add_argument("--qubit", nargs=2, action="append", required=True,
                   metavar=("DEVICE_JSON", "T1_CSV"))
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--qceff", type=float, default=3.0e5)
    p.add_argument("--xqp", type=float, default=0.0)
    p.add_argument("--mode", default="multilevel_signal",
                   choices=[m.value for m in T1Mode])
    p.add_argument("--bin-width-hz", type=float, default=8e6)
    p.add_argument("--exclusion-threshold", type=float, default=0.1)
    p.add_argument("--grid-start", type=float, default=-1.0)
    p.add_argument("--grid-stop", type=float, default=1.0)
    p.add_argument("--grid-step", type=float, default=0.05)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_fit_epsilon)

    p = sub.add_parser("fit-flux-noise", help="flux-noise amplitude from echo dephasing")
    p.add_argument("--device", required=True)
    p.add_argument("--dephasing-csv", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_fit_flux_noise)

    p = sub.add_parser("compare", help="pairwise Welch tests between distributions")
    p.add_argument("--dist", action="append", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("report", help="summary statistics plus the Welch matrix")
    p.add_argument("--dist", action="append", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(dump_json({"error": {"type": kind, "message": message}}))


def cli(argv) -> int:
    """Run one CLI invocation; returns the process exit code."""
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        _emit_error("UsageError", str(exc))
        return EXIT_USAGE
    except DataError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_DATA
    except (FluxT1Error, ValueError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
