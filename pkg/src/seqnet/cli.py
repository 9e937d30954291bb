"""Command-line interface: ``seqnet <subcommand> [flags]``.

Exit status is 0 on success, 1 on usage errors and 2 on data or model
errors. All randomness derives from ``--seed``; results do not depend on
``--threads``.
"""

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import resolve_threads
from .association import correlation_matrix, gene_association_network, relevance_network, \
    shrinkage_partial_correlations
from .citests import ALTERNATIVES, TESTS, ci_test, permutation_pvalue
from .data import RECODING_SCHEMES, load_dataset, load_genotypes, recode_snps
from .errors import KINSHIP_CAVEAT, KinshipCaveatWarning, SeqnetError
from .genomics import (AdditiveModelFit, cv_lambda, design_matrix, fit_additive, gwas_feature_select,
                       load_kinship, predict_additive)
from .graphs import as_dag, export_graph, from_json, parse_dot, to_json
from .learning import (ASSEMBLY_ORDERS, CONFLICT_POLICIES, SYMMETRY_RULES, LearnConfig, blanket_network,
                       learn_all_blankets, learn_markov_blanket, log_to_jsonl, pc_learn,
                       symmetric_mb_correction)
from .simulation import (PATTERNS, POWER_TESTS, GeneratorConfig, SnpScenario, load_scenarios, power_benchmark,
                         recovery_benchmark, simulate_dag, simulate_discrete, simulate_gaussian,
                         simulate_snp_trait, snp_trait_dataset)

DEFAULT_SEED = 12345
GRAPH_FORMATS = ("dot", "graphml", "json")
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers --------------------------------------------------------------------


class _Run:
    """Per-invocation context: output writing and progress messages."""

    def __init__(self, args):
        self.args = args
        self.progress = getattr(args, "progress", False)

    def say(self, message: str) -> None:
        if self.progress:
            print(f"[seqnet] {message}", file=sys.stderr, flush=True)

    def emit(self, text: str, path=None) -> None:
        path = path if path is not None else getattr(self.args, "out", None)
        if path is None or str(path) == "-":
            sys.stdout.write(text)
        else:
            Path(path).write_text(text, encoding="utf-8")
            self.say(f"wrote {path}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _names(values) -> list[str]:
    out = []
    for v in values or []:
        out.extend(s for s in v.split(",") if s)
    return out


def _load(args):
    schema = args.schema
    if schema is None:
        sidecar = Path(str(args.data) + ".schema")
        schema = str(sidecar) if sidecar.exists() else "infer"
    return load_dataset(args.data, schema=schema, missing=args.missing)


def _graph_format(args, default="dot") -> str:
    if args.format:
        return args.format
    out = getattr(args, "out", None)
    if out:
        suffix = Path(out).suffix.lstrip(".").lower()
        if suffix in GRAPH_FORMATS:
            return suffix
        if suffix == "gv":
            return "dot"
    return default


def _read_graph(path):
    text = Path(path).read_text(encoding="utf-8")
    if Path(path).suffix.lower() == ".json" or text.lstrip().startswith("{"):
        return from_json(text)
    return parse_dot(text)


def _kinship_caveat(d, names=None) -> None:
    names = d.names if names is None else names
    if any(d.is_genotype_coded(v) for v in names):
        warnings.warn(KINSHIP_CAVEAT, KinshipCaveatWarning, stacklevel=2)


def _table_format(args) -> str:
    if args.format:
        return args.format
    return "json" if args.out and Path(args.out).suffix.lower() == ".json" else "csv"


# -- subcommands ---------------------------------------------------------------


def cmd_test(run: _Run):
    a = run.args
    d = _load(a)
    cond = _names(a.cond)
    _kinship_caveat(d, [a.x, a.y, *cond])
    kwargs = {} if a.test == "g2" else {"alternative": a.alternative}
    res = ci_test(a.test, d, a.x, a.y, cond, **kwargs)
    obj = res.to_dict()
    if a.permutations:
        run.say(f"running {a.permutations} permutations")
        obj["p_permutation"] = permutation_pvalue(a.test, d, a.x, a.y, cond, B=a.permutations, seed=a.seed,
                                                  alternative=a.alternative, threads=a.threads)
    run.emit(json.dumps(obj) + "\n")


def _config(a) -> LearnConfig:
    return LearnConfig(a.test, a.alpha, a.max_cond, a.seed)


def cmd_learn(run: _Run):
    a = run.args
    d = _load(a)
    _kinship_caveat(d)
    run.say(f"PC-stable on {d.p} variables, n = {d.n}")
    res = pc_learn(d, _config(a), threads=a.threads, conflicts=a.conflicts)
    run.emit(export_graph(res.graph, _graph_format(a), undirected=a.undirected))
    log_path = a.log or (f"{a.out}.tests.jsonl" if a.out and a.out != "-" else None)
    if log_path:
        run.emit(log_to_jsonl(res.test_log), log_path)
    if a.sepsets:
        run.emit(_dumps(res.sepsets.to_dict()), a.sepsets)


def cmd_mb(run: _Run):
    a = run.args
    d = _load(a)
    cfg = _config(a)
    if a.target:
        run.say(f"blanket of {a.target}")
        if a.target in d:
            blanket = gwas_feature_select(d, a.target, cfg, threads=a.threads)
        else:
            blanket = learn_markov_blanket(d, a.target, cfg, threads=a.threads)
        order = {v: j for j, v in enumerate(d.names)}
        run.emit(_dumps({"target": a.target, "blanket": sorted(blanket, key=order.get)}))
        return
    _kinship_caveat(d)
    run.say(f"blankets of all {d.p} variables")
    raw = learn_all_blankets(d, cfg, threads=a.threads)
    order = {v: j for j, v in enumerate(d.names)}
    blankets = symmetric_mb_correction(raw, a.rule) if a.rule else raw
    obj = {"rule": a.rule, "blankets": {v: sorted(blankets[v], key=order.get) for v in d.names}}
    run.emit(_dumps(obj))
    if a.network:
        g = blanket_network(raw, a.rule or "AND", a.order)
        fmt = Path(a.network).suffix.lstrip(".").lower()
        run.emit(export_graph(g, fmt if fmt in GRAPH_FORMATS else "dot"), a.network)


def cmd_relnet(run: _Run):
    a = run.args
    d = _load(a)
    g = relevance_network(d, a.threshold)
    run.emit(export_graph(g, _graph_format(a)))
    if a.matrix:
        run.emit(correlation_matrix(d).to_csv(), a.matrix)


def cmd_ggm(run: _Run):
    a = run.args
    d = _load(a)
    g = gene_association_network(d, a.alpha, bonferroni=a.bonferroni, lambda_=a.lambda_)
    run.emit(export_graph(g, _graph_format(a)))
    if a.matrix:
        est = shrinkage_partial_correlations(d, a.lambda_)
        run.say(f"shrinkage intensity {est.lambda_:.6g}")
        run.emit(est.to_csv(), a.matrix)


def _parse_lambda(text: str):
    if text == "cv":
        return "cv"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'cv', got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("lambda must be >= 0")
    return value


def cmd_fit(run: _Run):
    a = run.args
    d = _load(a)
    if a.trait not in d:
        raise SeqnetError(f"unknown trait column {a.trait!r}")
    snps = _names(a.snps) or [v for v in d.names if v != a.trait]
    X, names = design_matrix(d, snps)
    y = d.numeric(a.trait)
    sigma = load_kinship(a.kinship) if a.kinship else None
    lam = a.lambda_
    if lam == "cv":
        run.say(f"{a.folds}-fold cross-validation over the lambda grid")
        lam, scores = cv_lambda(X, y, sigma, k=a.folds, seed=a.seed, threads=a.threads)
        run.say(f"selected lambda = {lam:.6g}")
    fit = fit_additive(X, y, sigma, lam, names)
    run.emit(fit.to_json())


def cmd_predict(run: _Run):
    a = run.args
    fit = AdditiveModelFit.from_json(Path(a.model).read_text(encoding="utf-8"))
    d = _load(a)
    missing = [s for s in fit.snp_names if s not in d]
    if missing:
        raise SeqnetError(f"data lacks model SNP column(s) {missing}")
    X, _ = design_matrix(d, fit.snp_names)
    yhat = predict_additive(fit, X)
    run.emit("prediction\n" + "".join(f"{v!r}\n" for v in map(float, yhat)))


def cmd_recode(run: _Run):
    a = run.args
    g = load_genotypes(a.genotypes, fmt=a.genotype_format, labelling=a.labelling)
    d = recode_snps(g, a.scheme)
    if a.phenotypes:
        ph = load_dataset(a.phenotypes, schema="infer")
        if ph.n != d.n:
            raise SeqnetError(f"phenotype file has {ph.n} rows for {d.n} genotype samples")
        for name in ph.names:
            if name in d:
                raise SeqnetError(f"phenotype column {name!r} clashes with a SNP name")
            d = d.with_column(ph.meta(name), ph.column(name))
    _write_dataset(run, d)


def _write_dataset(run: _Run, d):
    a = run.args
    run.emit(d.to_csv_text())
    if a.out and a.out != "-":
        run.emit(d.schema_text(), a.schema_out or f"{a.out}.schema")
    elif a.schema_out:
        run.emit(d.schema_text(), a.schema_out)


def cmd_simulate(run: _Run):
    a = run.args
    if a.kind == "snp":
        if a.scenario:
            scenarios = load_scenarios(Path(a.scenario).read_text(encoding="utf-8"))
            if len(scenarios) != 1:
                raise SeqnetError("simulate needs exactly one scenario")
            s = scenarios[0]
        else:
            s = SnpScenario(a.n, a.m, a.maf, a.pattern, a.h2, tuple(int(c) for c in _names(a.causal or ["1"])),
                            a.ld_rho, a.seed)
        geno, trait, truth = simulate_snp_trait(s)
        _write_dataset(run, snp_trait_dataset(geno, trait))
        if a.truth:
            run.emit(_dumps({"causal": list(truth.causal), "pattern": truth.pattern, "beta": truth.beta}), a.truth)
        return
    g = as_dag(_read_graph(a.dag)) if a.dag else simulate_dag(a.p, a.degree, a.seed)
    if a.kind == "dag":
        run.emit(export_graph(g, _graph_format(a, "json")))
        return
    if a.kind == "gaussian":
        d = simulate_gaussian(g, a.n, a.seed)
    else:
        d = simulate_discrete(g, a.n, a.seed, levels=a.levels, dirichlet_alpha=a.dirichlet_alpha)
    _write_dataset(run, d)
    if a.truth:
        run.emit(to_json(g), a.truth)


def cmd_power(run: _Run):
    a = run.args
    scenarios = load_scenarios(Path(a.scenarios).read_text(encoding="utf-8"))
    tests = _names(a.tests)
    run.say(f"{len(scenarios)} scenario(s) x {a.replicates} replicates")
    table = power_benchmark(scenarios, tests, a.alpha, a.replicates, a.seed, a.threads)
    run.emit(table.to_json() if _table_format(a) == "json" else table.to_csv())
    if a.gap:
        first, second = _names([a.gap])
        gaps = {}
        for i, s in enumerate(scenarios):
            sid = s.name or f"s{i + 1}"
            diff, se = table.gap(sid, first, second)
            gaps[sid] = {"difference": diff, "se": se}
        print(json.dumps({"gap": f"{first}-{second}", **gaps}), file=sys.stderr)


def cmd_recover(run: _Run):
    a = run.args
    dag = as_dag(_read_graph(a.dag)) if a.dag else None
    gen = GeneratorConfig(p=a.p, expected_degree=a.degree, n=a.n, data=a.data_kind, levels=a.levels, dag=dag)
    table = recovery_benchmark(gen, _config(a), a.replicates, a.seed, a.threads, a.conflicts)
    run.emit(table.to_json() if _table_format(a) == "json" else table.to_csv())
    run.say(f"median SHD {table.median_shd()}, perfect skeletons {table.perfect_skeletons()}")


def cmd_export(run: _Run):
    a = run.args
    g = _read_graph(a.graph)
    run.emit(export_graph(g, _graph_format(a), undirected=a.undirected))


# -- parser ---------------------------------------------------------------------


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _common(p, out_help="output path (default: standard output)"):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed (default {DEFAULT_SEED})")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: $SEQNET_THREADS or 1); results do not depend on it")
    p.add_argument("--progress", action="store_true", help="print progress messages on standard error")
    p.add_argument("--out", help=out_help)


def _data_args(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--schema", help="schema sidecar (default: <data>.schema if present, else infer)")
    p.add_argument("--missing", choices=("reject", "drop"), default="reject",
                   help="rows with missing cells: reject the file or drop the rows (default reject)")


def _learn_args(p, default_test="fisher_z"):
    p.add_argument("--test", choices=sorted(TESTS), default=default_test, help=f"CI test (default {default_test})")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    p.add_argument("--max-cond", type=int, default=3, help="largest conditioning set for PC (default 3)")


def _graph_out(p):
    p.add_argument("--format", choices=GRAPH_FORMATS, help="graph format (default: from --out suffix, else dot)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqnet", description="Graphical models for genomic data.")
    parser.add_argument("--version", action="version", version=f"seqnet {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="<command>", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("test", help="run one conditional-independence test")
    _common(p)
    _data_args(p)
    p.add_argument("--test", choices=sorted(TESTS), required=True, help="CI test")
    p.add_argument("--x", required=True, help="first variable (ordered groups for jt)")
    p.add_argument("--y", required=True, help="second variable (response for jt)")
    p.add_argument("--cond", action="append", help="conditioning variable(s), repeatable or comma-separated")
    p.add_argument("--alternative", choices=ALTERNATIVES, default="two-sided", help="alternative (jt, fisher_z)")
    p.add_argument("--permutations", type=int, default=0, help="also report a permutation p with this many replicates")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("learn", help="learn a CPDAG with PC-stable")
    _common(p, "graph output path; the test log goes to <out>.tests.jsonl unless --log is given")
    _data_args(p)
    _learn_args(p)
    _graph_out(p)
    p.add_argument("--log", help="JSON-lines test log path")
    p.add_argument("--sepsets", help="write separating sets as JSON to this path")
    p.add_argument("--undirected", action="store_true", help="render every edge as undirected")
    p.add_argument("--conflicts", choices=CONFLICT_POLICIES, default="raise",
                   help="contradictory colliders: raise an error or skip them (default raise)")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("mb", help="learn Markov blankets")
    _common(p, "JSON output path for the blanket(s)")
    _data_args(p)
    _learn_args(p)
    p.add_argument("--target", help="learn only this variable's blanket")
    p.add_argument("--rule", choices=SYMMETRY_RULES, help="symmetry correction across all blankets")
    p.add_argument("--order", choices=ASSEMBLY_ORDERS, default="correct-first",
                   help="when to apply the correction relative to network assembly")
    p.add_argument("--network", help="also write the blanket network (format from suffix)")
    p.set_defaults(func=cmd_mb)

    p = sub.add_parser("relnet", help="relevance network from thresholded correlations")
    _common(p)
    _data_args(p)
    _graph_out(p)
    p.add_argument("--threshold", type=float, required=True, help="minimum absolute correlation in [0, 1]")
    p.add_argument("--matrix", help="also write the correlation matrix as CSV")
    p.set_defaults(func=cmd_relnet)

    p = sub.add_parser("ggm", help="gene association network from shrunk partial correlations")
    _common(p)
    _data_args(p)
    _graph_out(p)
    p.add_argument("--alpha", type=float, default=0.05, help="edge significance level (default 0.05)")
    p.add_argument("--bonferroni", action="store_true", help="divide alpha by the number of pairs")
    p.add_argument("--lambda", dest="lambda_", type=float, help="fixed shrinkage intensity (default: analytic)")
    p.add_argument("--matrix", help="also write the partial-correlation matrix as CSV")
    p.set_defaults(func=cmd_ggm)

    p = sub.add_parser("fit", help="fit the additive SNP model")
    _common(p, "model JSON path")
    _data_args(p)
    p.add_argument("--trait", required=True, help="continuous trait column")
    p.add_argument("--snps", action="append", help="SNP columns (default: all but the trait)")
    p.add_argument("--kinship", help="kinship matrix CSV (default: identity)")
    p.add_argument("--lambda", dest="lambda_", type=_parse_lambda, default=1.0,
                   help="ridge parameter, or 'cv' for cross-validation (default 1.0)")
    p.add_argument("--folds", type=int, default=5, help="cross-validation folds (default 5)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict traits from a fitted model")
    _common(p, "CSV output path for predictions")
    _data_args(p)
    p.add_argument("--model", required=True, help="model JSON written by 'fit'")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("recode", help="recode genotype calls as numeric ordinal columns")
    _common(p, "CSV output path; the schema goes to <out>.schema unless --schema-out is given")
    p.add_argument("--genotypes", required=True, help="genotype file")
    p.add_argument("--genotype-format", choices=("tokens", "counts"), default="tokens",
                   help="AA/Aa/aa CSV or whitespace 0/1/2 allele counts (default tokens)")
    p.add_argument("--labelling", choices=("alphabetical", "frequency"), default="alphabetical",
                   help="allele labelling convention (default alphabetical)")
    p.add_argument("--scheme", choices=sorted(RECODING_SCHEMES), default="centered", help="numeric coding")
    p.add_argument("--phenotypes", help="CSV of row-aligned continuous columns to append")
    p.add_argument("--schema-out", help="schema output path")
    p.set_defaults(func=cmd_recode)

    p = sub.add_parser("simulate", help="simulate a DAG, a dataset or a SNP scenario")
    _common(p, "output path (graph for --kind dag, CSV otherwise)")
    p.add_argument("--kind", choices=("dag", "gaussian", "discrete", "snp"), required=True, help="what to simulate")
    p.add_argument("--dag", help="generating DAG (JSON or DOT) instead of a random one")
    p.add_argument("--p", type=int, default=5, help="nodes of the random DAG (default 5)")
    p.add_argument("--degree", type=float, default=1.5, help="expected degree of the random DAG (default 1.5)")
    p.add_argument("--n", type=int, default=1000, help="samples (default 1000)")
    p.add_argument("--levels", type=int, default=2, help="levels per discrete node (default 2)")
    p.add_argument("--dirichlet-alpha", type=float, default=1.0, help="Dirichlet concentration (default 1)")
    p.add_argument("--scenario", help="SNP scenario JSON (overrides the SNP flags)")
    p.add_argument("--m", type=int, default=10, help="SNPs (default 10)")
    p.add_argument("--maf", type=float, default=0.3, help="minor-allele frequency (default 0.3)")
    p.add_argument("--pattern", choices=PATTERNS, default="linear", help="effect pattern (default linear)")
    p.add_argument("--h2", type=float, default=0.1, help="heritability (default 0.1)")
    p.add_argument("--causal", action="append", help="1-based causal SNP indices (default 1)")
    p.add_argument("--ld-rho", type=float, default=0.0, help="adjacent-SNP correlation (default 0)")
    p.add_argument("--truth", help="write the generating truth (graph JSON or SNP truth JSON)")
    p.add_argument("--schema-out", help="schema output path (default <out>.schema)")
    _graph_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("power", help="power of single-SNP tests over scenarios")
    _common(p, "table output path (.json for JSON, else CSV)")
    p.add_argument("--scenarios", required=True, help="scenario JSON (object or list)")
    p.add_argument("--tests", action="append", help=f"tests among {', '.join(POWER_TESTS)} (default jt,linear)")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    p.add_argument("--replicates", type=int, default=1000, help="replicates per scenario (default 1000)")
    p.add_argument("--gap", help="report the paired power gap A,B per scenario on standard error")
    p.add_argument("--format", choices=("csv", "json"), help="table format")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("recover", help="structure-recovery benchmark for PC-stable")
    _common(p, "table output path (.json for JSON, else CSV)")
    _learn_args(p)
    p.add_argument("--dag", help="fixed generating DAG (JSON or DOT)")
    p.add_argument("--p", type=int, default=5, help="nodes of random DAGs (default 5)")
    p.add_argument("--degree", type=float, default=1.5, help="expected degree (default 1.5)")
    p.add_argument("--n", type=int, default=10000, help="samples per replicate (default 10000)")
    p.add_argument("--data-kind", choices=("gaussian", "discrete"), default="gaussian", help="data generator")
    p.add_argument("--levels", type=int, default=2, help="levels per discrete node (default 2)")
    p.add_argument("--replicates", type=int, default=20, help="replicates (default 20)")
    p.add_argument("--conflicts", choices=CONFLICT_POLICIES, default="raise", help="collider conflict policy")
    p.add_argument("--format", choices=("csv", "json"), help="table format")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("export", help="convert a graph between JSON, DOT and GraphML")
    _common(p)
    p.add_argument("--graph", required=True, help="graph file (JSON or DOT)")
    p.add_argument("--undirected", action="store_true", help="render every edge as undirected")
    _graph_out(p)
    p.set_defaults(func=cmd_export)
    return parser


def _report_warnings(caught) -> None:
    seen = {}
    for w in caught:
        seen.setdefault(w.category, []).append(str(w.message))
    for category, messages in seen.items():
        distinct = list(dict.fromkeys(messages))
        extra = f" ({len(distinct) - 1} similar warning(s) suppressed)" if len(distinct) > 1 else ""
        print(f"warning [{category.__name__}]: {distinct[0]}{extra}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.threads = resolve_threads(args.threads)
    except ValueError as exc:
        print(f"seqnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "tests", None) is None and args.command == "power":
        args.tests = ["jt,linear"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            with np.errstate(all="ignore"):
                args.func(_Run(args))
            status = EXIT_OK
        except (SeqnetError, ValueError, OSError, json.JSONDecodeError) as exc:
            print(f"seqnet {args.command}: error: {exc}", file=sys.stderr)
            status = EXIT_DATA
    _report_warnings(caught)
    return status


if __name__ == "__main__":
    sys.exit(main())
