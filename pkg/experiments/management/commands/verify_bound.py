"""
Monte-Carlo check of the majority-vote misranking bound under a Mallows
reranker.

Usage:
    python manage.py verify_bound --k 10 --votes 1,2,4,8,16,32 --theta 0.3 --trials 10000
"""

import logging

from ensembles.bounds import GAP_RANK, GAP_SCORE, VERIFY_COLUMNS, decay_sign_test, verify_bound

from ..base import ExperimentCommand, parse_csv, usage_error

logger = logging.getLogger(__name__)

RESULTS_FILE = "bound_verification.tsv"


def format_value(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def render_rows(rows) -> str:
    lines = ["\t".join(VERIFY_COLUMNS)]
    lines.extend("\t".join(format_value(v) for v in row.as_tuple()) for row in rows)
    return "\n".join(lines) + "\n"


class Command(ExperimentCommand):
    help = "Tabulate empirical misrank rates against the concentration bound"

    def add_command_arguments(self, parser):
        parser.add_argument("--k", type=int, default=10)
        parser.add_argument("--votes", default="1,2,4,8,16,32")
        parser.add_argument("--theta", default="0.1,0.3,1.0", help="One or more dispersions")
        parser.add_argument("--trials", type=int, default=10000)
        parser.add_argument("--mu-samples", dest="mu_samples", type=int, default=100000)
        parser.add_argument("--seed", type=int)
        parser.add_argument("--gap", choices=[GAP_SCORE, GAP_RANK], default=GAP_SCORE)
        parser.add_argument("--indexing", choices=["zero", "one"], default="zero")
        parser.add_argument("--out-dir", dest="out_dir")

    def run(self, options):
        votes = parse_csv(options["votes"], int)
        thetas = parse_csv(options["theta"], float)
        if not votes or min(votes) < 1:
            raise usage_error("--votes needs positive integers")
        if options["trials"] < 1 or options["mu_samples"] < 1:
            raise usage_error("--trials and --mu-samples must be positive")

        seed = options.get("seed")
        if seed is None:
            seed = self.run_config.validated_data.get("seed", 0)

        rows = verify_bound(
            K=options["k"],
            votes=votes,
            thetas=thetas,
            trials=options["trials"],
            seed=seed,
            mu_samples=options["mu_samples"],
            gap=options["gap"],
            indexing=options["indexing"],
        )
        table = render_rows(rows)

        for theta in thetas:
            rates = [row.empirical_rate for row in rows if row.theta == theta]
            decay = decay_sign_test(rates)
            logger.info(
                f"theta={theta}: {decay.decreasing} decreasing / {decay.increasing} increasing "
                f"successive log-rates (p={decay.p_value:.3g})"
            )
        violations = [row for row in rows if not row.within_bound]
        if violations:
            logger.warning(f"{len(violations)} rows exceed bound + 3 standard errors")

        if options.get("out_dir") or self.run_config.path("out_dir"):
            path = self.out_dir(options) / RESULTS_FILE
            path.write_text(table, encoding="utf-8")
            logger.info(f"Wrote bound verification table to {path}")

        self.stdout.write(table, ending="")
