"""Command-line entry points for corpus runs, offline aggregation and stats."""

from __future__ import annotations

import asyncio
import json
from pathlib import Path

import click

from .backend import (
    FaultSchedule,
    HttpBackend,
    LatencyModel,
    MockBackend,
    load_keyword_rules,
)
from .export import export_corpus_tables
from .orchestrator import RetryPolicy, RunConfig, run_corpus
from .quality import wilson_interval
from .schema import load_schema_set


def _parse_strata(raw: tuple[str, ...]) -> list[tuple[str, str]]:
    strata = []
    for item in raw:
        column_a, _, column_b = item.partition(",")
        if not column_b:
            raise click.BadParameter(
                f"{item!r}: strata are given as"
                " <payload>.<field>,<payload>.<field>"
            )
        strata.append((column_a.strip(), column_b.strip()))
    return strata


@click.group()
def main() -> None:
    """Convert a directory of scientific PDFs into a structured study table."""


@main.command()
@click.option(
    "--corpus", type=click.Path(exists=True, file_okay=False), required=True,
    help="Directory scanned recursively for *.pdf files.",
)
@click.option(
    "--out", type=click.Path(file_okay=False), required=True,
    help="Output directory (table, markdown, cache, index, aggregates).",
)
@click.option("--schema", default="doac.v1", show_default=True,
              help="Bundled schema name or path to a schema YAML file.")
@click.option("--backend", "backend_kind", type=click.Choice(["mock", "http"]),
              default="mock", show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="Seed for the mock backend's deterministic responses.")
@click.option("--pages-per-chunk", default=8, show_default=True)
@click.option("--concurrency", default=3, show_default=True,
              help="Maximum simultaneous in-flight requests.")
@click.option("--rps", default=5.0, show_default=True,
              help="Maximum request dispatch rate per second.")
@click.option("--retries", default=3, show_default=True,
              help="Maximum retries per request after transient errors.")
@click.option("--backoff-min", default=1.0, show_default=True)
@click.option("--backoff-max", default=60.0, show_default=True)
@click.option("--images/--no-images", default=False, show_default=True,
              help="Request embedded page images from the backend.")
@click.option("--overwrite", is_flag=True, default=False, show_default=True,
              help="Rebuild all artifacts, reusing cached responses.")
@click.option("--keyword-table", type=click.Path(exists=True, dir_okay=False),
              default=None, help="TSV keyword table for the mock backend.")
@click.option("--fault-schedule", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Injected fault schedule for the mock backend.")
@click.option("--latency", type=click.Choice(["none", "fixed", "lognormal"]),
              default="none", show_default=True,
              help="Latency model for the mock backend.")
@click.option("--latency-seconds", default=0.0, show_default=True)
@click.option("--strata", multiple=True,
              help="Cross-tabulation pair, e.g. "
                   "'meta_design.year,population_indications.doac_molecules'; "
                   "repeat for more pairs.")
@click.option("--charts", is_flag=True, default=False, show_default=True,
              help="Also render bar charts for frequency aggregates.")
def run(
    corpus: str,
    out: str,
    schema: str,
    backend_kind: str,
    seed: int,
    pages_per_chunk: int,
    concurrency: int,
    rps: float,
    retries: int,
    backoff_min: float,
    backoff_max: float,
    images: bool,
    overwrite: bool,
    keyword_table: str | None,
    fault_schedule: str | None,
    latency: str,
    latency_seconds: float,
    strata: tuple[str, ...],
    charts: bool,
) -> None:
    """Run the full pipeline over a PDF corpus."""
    schema_set = load_schema_set(schema)
    config = RunConfig(
        pages_per_chunk=pages_per_chunk,
        concurrency=concurrency,
        rps=rps,
        retry=RetryPolicy(
            max_retries=retries, backoff_min=backoff_min, backoff_max=backoff_max
        ),
        include_images=images,
        overwrite=overwrite,
    )

    async def _run() -> None:
        if backend_kind == "mock":
            backend = MockBackend(
                schema_set,
                seed=seed,
                rules=load_keyword_rules(keyword_table) if keyword_table else None,
                fault_schedule=(
                    FaultSchedule.load(fault_schedule) if fault_schedule else None
                ),
                latency=LatencyModel(kind=latency, seconds=latency_seconds),
            )
            close = None
        else:
            backend = HttpBackend.from_env()
            close = backend.aclose
        try:
            report, _ = await run_corpus(
                corpus, out, schema_set, backend, config,
                strata=_parse_strata(strata), charts=charts,
            )
        finally:
            if close is not None:
                await close()
        click.echo(report.to_json(), nl=False)

    asyncio.run(_run())


@main.command()
@click.option("--out", type=click.Path(exists=True, file_okay=False), required=True,
              help="Output directory holding studies.csv from a previous run.")
@click.option("--schema", default="doac.v1", show_default=True)
@click.option("--strata", multiple=True,
              help="Cross-tabulation pair of <payload>.<field> column names.")
@click.option("--charts", is_flag=True, default=False, show_default=True)
def aggregate(out: str, schema: str, strata: tuple[str, ...], charts: bool) -> None:
    """Regenerate aggregates, parquet and charts from an existing study table."""
    schema_set = load_schema_set(schema)
    tables = export_corpus_tables(
        out, schema_set, strata=_parse_strata(strata), charts=charts
    )
    click.echo(
        json.dumps(
            {
                column: table.studies_with_value
                for column, table in sorted(tables.items())
            },
            indent=2,
        )
    )


@main.command()
@click.argument("successes", type=int)
@click.argument("trials", type=int)
@click.option("--z", default=1.96, show_default=True,
              help="Normal quantile for the confidence level.")
def wilson(successes: int, trials: int, z: float) -> None:
    """Wilson score interval for a proportion, as percentages."""
    low, high = wilson_interval(successes, trials, z=z)
    click.echo(f"{low:.1f} {high:.1f}")


@main.command()
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--workdir", type=click.Path(file_okay=False), required=True,
              help="Directory receiving the generated corpus and outputs.")
def scenario(scenario_file: str, workdir: str) -> None:
    """Run a simulation scenario (YAML) on the virtual clock."""
    from .simharness import run_scenario

    result = run_scenario(Path(scenario_file), workdir)
    click.echo(result.report.to_json(), nl=False)
    if result.failures:
        for failure in result.failures:
            click.echo(f"assertion failed: {failure}", err=True)
        raise SystemExit(1)
    click.echo(f"scenario {result.name}: all assertions passed", err=True)


if __name__ == "__main__":
    main()
