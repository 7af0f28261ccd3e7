"""Command-line front end.

Exit codes: 0 success, 1 runtime error, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .bench import BenchMismatch, run_bench
from .footprints import (
    FuzzyParams,
    InsufficientDataError,
    extract_line_entry,
    extract_point_entry,
    extract_polygon_entry,
)
from .geometry import DegenerateGeometryError, ellipse_to_polygon, Ellipse
from .ingest import (
    LayerError,
    SpecError,
    filter_valid,
    format_tsv,
    generate_synthetic,
    geometry_from_geojson,
    parse_tsv,
    read_features,
    read_geojson_layer,
    read_synthetic_spec,
    write_geojson,
    RNG_ALGORITHM,
)
from .jobs import (
    DEFAULT_LEXICON,
    _round_half_up,
    cooccurrence_job,
    extract_by_type,
    join_back,
    matching_records,
    parse_lexicon,
    spatial_join_job,
    tag_frequency_job,
)
from .mapreduce import DEFAULT_BLOCK_SIZE, MapReduceError, default_workers
from .model import BBox, GazetteerEntry, MultiPolygon, Point, Polygon
from .trust import (
    ReliabilityContext,
    TrustThresholds,
    build_profiles,
    contribution_distribution,
    filter_entries,
    format_distribution_tsv,
    format_profiles_tsv,
)

logger = logging.getLogger("gazforge")


class UsageError(Exception):
    """Bad arguments or input that fails validation (exit 2)."""


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _metadata(args, command: str, params: dict, inputs: Sequence[str]) -> dict:
    meta = {
        "tool": "gazforge",
        "version": __version__,
        "command": command,
        "parameters": params,
        "inputs": {Path(p).name: _sha256(p) for p in inputs if p},
    }
    if getattr(args, "seed_report", False):
        effective = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "seed_report")}
        meta["effective_parameters"] = effective
        print(json.dumps(effective, sort_keys=True, default=str))
    return meta


def _write(path: str, text: str) -> None:
    out = Path(path)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")


def _load_points(path: str) -> list:
    try:
        with open(path, encoding="utf-8") as fh:
            records, skipped = parse_tsv(fh)
    except FileNotFoundError:
        raise UsageError(f"points file not found: {path}") from None
    if skipped:
        print(f"warning: skipped {skipped} malformed line(s) in {path}", file=sys.stderr)
    return filter_valid(records)


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"{what} not found: {path}") from None


def _workers(args) -> int:
    return args.workers if args.workers is not None else default_workers()


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    spec = read_synthetic_spec(_read_text(args.spec, "spec"))
    records = generate_synthetic(spec)
    meta = _metadata(args, "synth", {"seed": spec.seed, "rng": RNG_ALGORITHM}, [args.spec])
    _write(args.out, format_tsv(records, {"gazforge": json.dumps(meta, sort_keys=True)}))
    print(f"records={len(records)} users={len({r.user_id for r in records})}")
    return 0


def cmd_extract(args) -> int:
    lexicon = parse_lexicon(_read_text(args.lexicon, "lexicon")) if args.lexicon else DEFAULT_LEXICON
    if args.type not in lexicon:
        raise UsageError(f"unknown feature type {args.type!r}; known: {', '.join(lexicon)}")
    records = _load_points(args.points)
    out = extract_by_type(records, (args.type, lexicon[args.type]))
    params = {"type": args.type, "keywords": list(lexicon[args.type])}
    meta = _metadata(args, "extract", params, [args.points, args.lexicon])
    _write(args.out, format_tsv(out, {"gazforge": json.dumps(meta, sort_keys=True)}))
    print(f"type={args.type} records={len(out)} of {len(records)}")
    return 0


def cmd_join(args) -> int:
    records = _load_points(args.points)
    layer = read_geojson_layer(_read_text(args.layer, "layer"), args.key, name=Path(args.layer).stem)
    for idx, reason in layer.rejected:
        print(f"warning: layer feature {idx} rejected: {reason}", file=sys.stderr)
    if len(layer) == 0:
        raise UsageError("layer has no polygon features")
    counts = spatial_join_job(records, layer, args.ids, _workers(args), block_size=args.block_size)
    rows = join_back(layer, counts)
    params = {"key": args.key, "ids": args.ids}
    meta = _metadata(args, "join", params, [args.points, args.layer])
    _write(args.out, write_geojson(rows, meta))
    per_unit = [a["count"] for _, _, a in rows]
    hit = [c for c in per_unit if c > 0]
    mean = _round_half_up(sum(hit) / len(hit)) if hit else 0
    print(f"records={len(records)} joined={sum(per_unit)} units_hit={len(hit)} of {len(rows)} mean_per_unit={mean}")
    return 0


def cmd_cooccur(args) -> int:
    records = _load_points(args.points)
    if args.mode == "cooccur":
        counts = cooccurrence_job(records, args.place, _workers(args), block_size=args.block_size)
    else:
        matched = matching_records(records, args.place)
        counts = tag_frequency_job(matched, _workers(args), block_size=args.block_size)
    params = {"place": args.place, "top": args.top, "mode": args.mode}
    meta = _metadata(args, "cooccur", params, [args.points])
    header = f"# gazforge={json.dumps(meta, sort_keys=True)}\n"
    _write(args.out, header + counts.to_tsv(args.top))
    print(f"place={args.place!r} tokens={len(counts)}")
    return 0


def _entry_feature(entry: GazetteerEntry) -> tuple[str, object, dict]:
    props = {
        "name": entry.name,
        "feature_type": entry.feature_type,
        "top_tags": [list(t) for t in entry.top_tags],
        "n_points": entry.n_points,
        "contributors": len(entry.contributors),
        "trusted_contributors": len(entry.trusted_contributors),
        "contributor_ids": sorted(entry.contributors),
    }
    for k, v in entry.attributes.items():
        props.setdefault(k, v)
    return entry.name, entry.footprint, props


def _ellipse_feature(name: str, attrs: dict) -> tuple[str, object, dict]:
    e = Ellipse(Point(*attrs["center"]), attrs["semi_major_m"], attrs["semi_minor_m"], attrs["theta_rad"], attrs["k"])
    props = {"kind": "sde_ellipse", "k": e.k, "semi_major_m": e.semi_major_m,
             "semi_minor_m": e.semi_minor_m, "theta_rad": e.theta, "name": name}
    return f"{name}#sde{e.k:g}", ellipse_to_polygon(e), props


def _clip_polygons(path: str) -> list[Polygon]:
    polys: list[Polygon] = []
    for _, geom, _ in read_features(_read_text(path, "clip file")):
        if isinstance(geom, Polygon):
            polys.append(geom)
        elif isinstance(geom, MultiPolygon):
            polys.extend(geom.parts)
    if not polys:
        raise UsageError(f"clip file {path} has no polygons")
    return polys


def cmd_footprint(args) -> int:
    records = matching_records(_load_points(args.points), args.name)
    ftype = args.feature_type or {"point": "landmark", "line": "road", "polygon": "area"}[args.kind]
    params: dict = {"name": args.name, "kind": args.kind, "feature_type": ftype}
    extra = []
    if args.kind == "point":
        entry = extract_point_entry(records, args.name, ftype, args.k, sqrt2_correction=not args.no_sqrt2)
        params.update(k=args.k, sqrt2_correction=not args.no_sqrt2)
        if not entry.attributes.get("degenerate"):
            for key in ("ellipse_1sigma", "ellipse"):
                extra.append(_ellipse_feature(args.name, entry.attributes[key]))
    elif args.kind == "line":
        clip = _clip_polygons(args.clip) if args.clip else None
        entry = extract_line_entry(records, args.name, ftype, clip)
        params.update(clip=bool(args.clip))
    else:
        p = FuzzyParams(args.beta, args.c, args.d1, args.d2, args.unit_scale)
        entry = extract_polygon_entry(records, args.name, ftype, p, args.alpha, args.boundary)
        params.update(alpha=args.alpha, beta=args.beta, c=args.c, d1=args.d1, d2=args.d2,
                      unit_scale=args.unit_scale, boundary=args.boundary)
    meta = _metadata(args, "footprint", params, [args.points, args.clip])
    _write(args.out, write_geojson([_entry_feature(entry)] + extra, meta))
    print(f"{args.kind} footprint for {args.name!r}: {entry.n_points} points, {len(entry.contributors)} contributors")
    return 0


def _read_entries(path: str) -> list[GazetteerEntry]:
    doc = json.loads(_read_text(path, "entries file"))
    feats = doc.get("features", [doc]) if doc.get("type") == "FeatureCollection" else [doc]
    entries = []
    for feat in feats:
        props = feat.get("properties") or {}
        if "feature_type" not in props or "name" not in props:
            continue
        ids = props.get("contributor_ids")
        if ids is None:
            ids = [f"anonymous-{i}" for i in range(int(props.get("contributors", 0)))]
        tags = sorted(((str(t), int(c)) for t, c in props.get("top_tags", [])), key=lambda tc: (-tc[1], tc[0]))
        entries.append(GazetteerEntry(
            name=props["name"],
            feature_type=props["feature_type"],
            footprint=geometry_from_geojson(feat["geometry"]),
            top_tags=tags,
            contributors=frozenset(ids),
            trusted_contributors=frozenset(ids),
            n_points=int(props.get("n_points", 0)),
            attributes={},
        ))
    return entries


def _bbox_arg(text: str) -> BBox:
    try:
        parts = [float(v) for v in text.split(",")]
        return BBox(*parts)
    except (TypeError, ValueError) as exc:
        raise argparse.ArgumentTypeError(f"bbox must be min_lon,min_lat,max_lon,max_lat ({exc})") from None


def cmd_trust(args) -> int:
    records = _load_points(args.points)
    ctx = ReliabilityContext(region=args.region, predicate=args.predicate)
    profiles = build_profiles(records, ctx, args.w_scheme)
    dist = contribution_distribution(profiles)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = {"min_contributors": args.min_contributors, "min_tags": args.min_tags,
              "min_reputation": args.min_reputation, "w_scheme": args.w_scheme, "predicate": args.predicate,
              "region": None if args.region is None else [args.region.min_lon, args.region.min_lat,
                                                          args.region.max_lon, args.region.max_lat]}
    meta = _metadata(args, "trust", params, [args.points, args.entries])
    header = f"# gazforge={json.dumps(meta, sort_keys=True)}\n"
    _write(str(out / "profiles.tsv"), header + format_profiles_tsv(profiles))
    _write(str(out / "distribution.tsv"), header + format_distribution_tsv(dist))
    print(f"users={len(profiles)} {dist.summary()}")
    if args.entries:
        entries = _read_entries(args.entries)
        t = TrustThresholds(args.min_contributors, args.min_tags, args.min_reputation)
        accepted, rejected = filter_entries(entries, profiles, t)
        lines = [f"{e.name}\taccepted\t{len(e.trusted_contributors)}\t\n" for e in accepted]
        lines += [f"{e.name}\trejected\t{len(e.trusted_contributors)}\t{','.join(r)}\n" for e, r in rejected]
        _write(str(out / "entries.tsv"), header + "".join(lines))
        _write(str(out / "accepted.geojson"), write_geojson([_entry_feature(e) for e in accepted], meta))
        for e in accepted:
            print(f"accepted: {e.name} ({len(e.trusted_contributors)} trusted contributors)")
        for e, reasons in rejected:
            print(f"rejected: {e.name}: {', '.join(reasons)}")
    return 0


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("values must be positive integers")
    return values


def cmd_bench(args) -> int:
    report = run_bench(
        args.points_sizes, args.polygon_sizes, args.workers, args.repeats,
        block_size=args.block_size, seed=args.seed, baseline=args.baseline,
        log=lambda msg: print(msg, file=sys.stderr),
    )
    _write(args.out, report.to_csv())
    print(report.summary())
    return 0


# ---------------------------------------------------------------- parser


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gazforge {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--seed-report", action="store_true",
                       help="echo all effective parameters and embed them in the output metadata")
        return p

    def engine_opts(p):
        p.add_argument("--workers", type=_positive_int, default=None,
                       help="worker processes (default: $GAZFORGE_WORKERS or 1)")
        p.add_argument("--block-size", type=_positive_int, default=DEFAULT_BLOCK_SIZE)

    p = add("synth", cmd_synth, "generate a synthetic photo-record TSV from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)

    p = add("extract", cmd_extract, "keep records tagged with a place type's keywords")
    p.add_argument("--points", required=True)
    p.add_argument("--type", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--out", required=True)

    p = add("join", cmd_join, "count points per polygon and write the joined layer")
    p.add_argument("--points", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--ids", action="store_true", help="also collect contained photo ids")
    engine_opts(p)
    p.add_argument("--out", required=True)

    p = add("cooccur", cmd_cooccur, "rank tags co-occurring with a place name")
    p.add_argument("--points", required=True)
    p.add_argument("--place", required=True)
    p.add_argument("--top", type=_positive_int, default=10)
    p.add_argument("--mode", choices=("cooccur", "frequency"), default="cooccur",
                   help="cooccur drops the place name's own tokens; frequency keeps them")
    engine_opts(p)
    p.add_argument("--out", required=True)

    p = add("footprint", cmd_footprint, "build a point, line or polygon gazetteer entry")
    p.add_argument("--points", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--kind", choices=("point", "line", "polygon"), required=True)
    p.add_argument("--feature-type")
    p.add_argument("--k", type=float, default=2.0, help="SDE scale in standard deviations")
    p.add_argument("--no-sqrt2", action="store_true", help="disable the sqrt(2) SDE correction")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--c", type=float, default=5.0)
    p.add_argument("--d1", type=float, default=50.0)
    p.add_argument("--d2", type=float, default=5000.0)
    p.add_argument("--unit-scale", type=float, default=1.0)
    p.add_argument("--boundary", choices=("mbr", "hull"), default="hull")
    p.add_argument("--clip")
    p.add_argument("--out", required=True)

    p = add("trust", cmd_trust, "score contributors and filter gazetteer entries")
    p.add_argument("--points", required=True)
    p.add_argument("--entries")
    p.add_argument("--min-contributors", type=int, default=15)
    p.add_argument("--min-tags", type=int, default=10)
    p.add_argument("--min-reputation", type=float, default=0.0)
    p.add_argument("--region", type=_bbox_arg)
    p.add_argument("--predicate", default="default")
    p.add_argument("--w-scheme", choices=("log", "percentile"), default="log")
    p.add_argument("--out", required=True)

    p = add("bench", cmd_bench, "time the spatial join across sizes and worker counts")
    p.add_argument("--points-sizes", type=_int_list, default=[10_000, 100_000, 1_000_000])
    p.add_argument("--polygon-sizes", type=_int_list, default=[64, 1024, 4096, 16384])
    p.add_argument("--workers", type=_int_list, default=[1, 2, 4])
    p.add_argument("--repeats", type=_positive_int, default=3)
    p.add_argument("--block-size", type=_positive_int, default=DEFAULT_BLOCK_SIZE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", choices=("oracle", "kernel"), default="oracle",
                   help="denominator of the speedup column")
    p.add_argument("--out", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LayerError, MapReduceError, InsufficientDataError, DegenerateGeometryError, BenchMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
