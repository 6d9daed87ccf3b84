"""Command-line interface: ``toruscopula <command> [options]``.

Exit codes: 0 success, 1 input error, 2 fit did not converge.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import io
from .copula import make_model
from .correlation import AR1, ExpDecay, Identity, Unstructured
from .inference import Dataset, ModelSpec, fit_mle
from .marginals import make_marginal
from .spatial import (
    DuplicateLocationError,
    Kriger,
    SpatialDataset,
    distance_matrix,
    grid_over,
    project_lonlat,
)

logger = logging.getLogger("toruscopula")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise io.InputError(f"cannot parse {text!r} as a comma-separated list of numbers") from None


def _families(text: str) -> list[str]:
    fams = [f.strip().lower() for f in text.split(",") if f.strip()]
    for f in fams:
        if f not in ("vm", "wc"):
            raise io.InputError(f"unknown family {f!r}; use vm or wc")
    return fams


def _broadcast(values: list, dim: int, name: str) -> list:
    if len(values) == 1:
        return values * dim
    if len(values) != dim:
        raise io.InputError(f"--{name} needs 1 or {dim} values, got {len(values)}")
    return values


def _margins(args, dim: int):
    fams = _broadcast(_families(args.family), dim, "family")
    mus = _broadcast(_floats(args.mu), dim, "mu")
    kappas = _broadcast(_floats(args.kappa), dim, "kappa")
    try:
        return [make_marginal(f, m, k) for f, m, k in zip(fams, mus, kappas)]
    except ValueError as exc:
        raise io.InputError(str(exc)) from None


def _correlation(structure: str, rho: list[float], dim: int, distances=None):
    try:
        if structure == "identity":
            return Identity(dim)
        if structure == "ar1":
            return AR1(rho[0], dim)
        if structure == "expdecay":
            return ExpDecay(rho[0], distances)
        expected = dim * (dim - 1) // 2
        if len(rho) != expected:
            raise io.InputError(f"unstructured correlation needs {expected} values for K={dim}")
        mat = np.eye(dim)
        mat[np.triu_indices(dim, 1)] = rho
        mat = mat + np.triu(mat, 1).T
        corr = Unstructured(mat)
        corr.matrix()
        return corr
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise io.InputError(str(exc)) from None


def _family_spec(text: str, dim: int):
    fams = _broadcast(_families(text), dim, "family")
    return fams[0] if len(set(fams)) == 1 else tuple(fams)


def _sites(locations, args):
    return project_lonlat(locations) if args.lonlat else locations


def cmd_fit(args) -> int:
    if args.structure == "expdecay":
        locations, angles = io.read_spatial_csv(args.input, args.degrees)
        locations = _sites(locations, args)
        try:
            distances = distance_matrix(locations)
        except DuplicateLocationError as exc:
            raise io.InputError(str(exc)) from None
        data = angles.T
    else:
        locations, distances = None, None
        data = io.read_wide_csv(args.input, args.degrees)
    dim = data.shape[1]
    if dim < 2:
        raise io.InputError("need at least two angle columns (or two sites)")
    spec = ModelSpec(args.structure, _family_spec(args.family, dim), distances)
    dataset = Dataset(data, args.shared_margin)
    result = fit_mle(dataset, spec)
    doc = io.fit_to_dict(result, spec, dim, args.shared_margin, locations)
    io.save_fit(args.output, doc)
    logger.info("log-likelihood %.6f, converged=%s", result.log_likelihood, result.converged)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_simulate(args) -> int:
    distances = locations = None
    if args.structure == "expdecay":
        if not args.input:
            raise io.InputError("expdecay simulation needs --input with site coordinates (x, y)")
        locations = _sites(io.read_locations_csv(args.input), args)
        try:
            distances = distance_matrix(locations)
        except DuplicateLocationError as exc:
            raise io.InputError(str(exc)) from None
        dim = locations.shape[0]
    else:
        dim = args.dim
    if dim < 1 or args.n < 1:
        raise io.InputError("--dim and --n must be positive")
    rho = _floats(args.rho) if args.rho else [0.0]
    model = make_model(_margins(args, dim), _correlation(args.structure, rho, dim, distances))
    y = model.simulate(args.n, seed=args.seed)
    if locations is not None:
        header = ["x", "y"] + [f"angle{i + 1}" for i in range(args.n)]
        rows = (list(locations[k]) + list(y[:, k]) for k in range(dim))
    else:
        header = [f"y{k + 1}" for k in range(dim)]
        rows = y
    io.write_csv(args.output, header, rows)
    return EXIT_OK


def cmd_predict_band(args) -> int:
    path = args.model or args.input
    if not path:
        raise io.InputError("predict-band needs --model with a fitted-model JSON file")
    doc = io.load_fit(path)
    distances = None
    if doc["structure"] == "expdecay":
        distances = distance_matrix(np.asarray(doc["locations"]))
    model = io.model_from_fit(doc, distances)
    target = args.target - 1
    if not 1 <= target < model.dim:
        raise io.InputError(f"--target must be between 2 and {model.dim}")
    pair = model.submodel([target - 1, target])
    grid = -np.pi + 2.0 * np.pi * np.arange(args.grid) / args.grid
    arc = pair.prediction_arc(1, grid[:, None], args.coverage)
    wrap = arc.crosses_cut.astype(int)
    io.write_csv(args.output, ["y_prev", "lower", "upper", "wrap"],
                 zip(grid, arc.lower, arc.upper, (str(w) for w in wrap)))
    return EXIT_OK


def cmd_krige(args) -> int:
    if not args.model:
        raise io.InputError("krige needs --model with a fitted-model JSON file")
    doc = io.load_fit(args.model)
    if doc["structure"] != "expdecay":
        raise io.InputError("kriging needs a model fitted with --structure expdecay")
    locations, angles = io.read_spatial_csv(args.input, args.degrees)
    locations = _sites(locations, args)
    try:
        data = SpatialDataset(locations, angles[:, 0])
    except DuplicateLocationError as exc:
        raise io.InputError(str(exc)) from None
    model = io.model_from_fit(doc, data.distances)
    kriger = Kriger(model, data)
    grid = grid_over(locations, args.grid)
    results = kriger.predict(grid, args.coverage)
    rows = ((r.site.x, r.site.y, r.predicted_angle, float(r.arc.length), r.arc.lower, r.arc.upper)
            for r in results)
    io.write_csv(args.output, ["x", "y", "predicted_angle", "arc_length", "lower", "upper"], rows)
    return EXIT_OK


def cmd_density_grid(args) -> int:
    fams = _families(args.family)
    mus, kappas = _floats(args.mu), _floats(args.kappa)
    if not (len(fams) == len(mus) == len(kappas) == 2):
        raise io.InputError("density-grid needs exactly two margins (K = 2)")
    rho = _floats(args.rho) if args.rho else [0.0]
    if len(rho) != 1 or not abs(rho[0]) < 1.0:
        raise io.InputError("density-grid needs a single correlation with |rho| < 1")
    margins = _margins(args, 2)
    model = make_model(margins, _correlation("unstructured", rho, 2))
    g = -np.pi + 2.0 * np.pi * np.arange(args.grid) / args.grid
    Y1, Y2 = np.meshgrid(g, g, indexing="ij")
    dens = model.pdf(np.stack([Y1, Y2], axis=-1))
    io.write_csv(args.output, ["y1", "y2", "density"], zip(Y1.ravel(), Y2.ravel(), dens.ravel()))
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "predict-band": cmd_predict_band,
    "krige": cmd_krige,
    "density-grid": cmd_density_grid,
}


def _check_grid(text):
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError("grid resolution must be at least 2")
    return v


def _check_coverage(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("coverage must lie in (0, 1)")
    return v


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; exit code 2 is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toruscopula",
                                     description="Gaussian-copula models for correlated circular data.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--input", help="input CSV (wide angles, or x,y,angle for spatial data)")
    parser.add_argument("--output", required=True, help="output path")
    parser.add_argument("--model", help="fitted-model JSON (predict-band, krige)")
    parser.add_argument("--family", default="vm", help="vm or wc; comma-separated for per-margin families")
    parser.add_argument("--structure", default="ar1",
                        choices=["ar1", "expdecay", "unstructured", "identity"])
    parser.add_argument("--shared-margin", action="store_true",
                        help="one common (mu, kappa) for all coordinates")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--grid", type=_check_grid, default=100, help="grid resolution")
    parser.add_argument("--coverage", type=_check_coverage, default=0.95)
    parser.add_argument("--degrees", action="store_true", help="input angles are in degrees")
    parser.add_argument("--lonlat", action="store_true",
                        help="spatial x, y are longitude, latitude in degrees; projected to km")
    sim = parser.add_argument_group("model parameters (simulate, density-grid)")
    sim.add_argument("--n", type=int, default=100, help="number of replicates to simulate")
    sim.add_argument("--dim", type=int, default=2, help="number of coordinates K")
    sim.add_argument("--mu", default="0", help="circular mean(s), radians")
    sim.add_argument("--kappa", default="1", help="concentration(s)")
    sim.add_argument("--rho", default=None,
                     help="correlation parameter; for unstructured, the upper triangle row by row")
    parser.add_argument("--target", type=int, default=2,
                        help="predict-band: 1-based coordinate predicted from the one before it")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command in ("fit", "krige") and not args.input:
        print(f"error: {args.command} needs --input", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except io.InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
