"""Command-line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import json
import logging
import sys

import click
import yaml

from .config import PipelineConfig
from .errors import CaseSimError, ConfigError, DataError, MissingArtifact

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_DATA, EXIT_OTHER = 0, 2, 3, 4, 1


def _parse_set(values) -> dict:
    out = {}
    for item in values:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key] = yaml.safe_load(raw) if raw else None
    return out


def _echo(obj) -> None:
    click.echo(json.dumps(obj, ensure_ascii=False, indent=2, default=str))


class Ctx:
    def __init__(self, config_path, overrides):
        self.config_path = config_path
        self.overrides = overrides
        self._pipeline = None

    @property
    def config(self) -> PipelineConfig:
        return self.pipeline.config

    @property
    def pipeline(self):
        if self._pipeline is None:
            from .experiment import Pipeline

            self._pipeline = Pipeline(PipelineConfig.load(self.config_path, self.overrides))
        return self._pipeline


pass_ctx = click.make_pass_decorator(Ctx)


def _code(text):
    from .experiment import ExperimentCode

    return ExperimentCode.parse(text)


@click.group()
@click.option("-c", "--config", "config_path", type=click.Path(dir_okay=False), help="YAML config file.")
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE", help="Override a config key (dotted path).")
@click.option("-o", "--output", help="Output directory (overrides config).")
@click.option("--seed", type=int, help="Global seed (overrides config).")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def cli(ctx, config_path, sets, output, seed, verbose):
    """Judgment-similarity pipeline over court- or LLM-listed disputes."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = _parse_set(sets)
    if output:
        overrides["output"] = output
    if seed is not None:
        overrides["seed"] = seed
    ctx.obj = Ctx(config_path, overrides)


@cli.command()
@pass_ctx
def ingest(c: Ctx):
    """Parse and filter the corpus; extract and blur dispute lists."""
    _echo(c.pipeline.ingest())


@cli.command("llm-disputes")
@click.option("--source", type=click.Choice(["llm_a", "llm_b", "all"]), default="all")
@pass_ctx
def llm_disputes(c: Ctx, source):
    """Run the three-step prompt chain over party statements."""
    sources = ("llm_a", "llm_b") if source == "all" else (source,)
    _echo({s: c.pipeline.llm_disputes(s) for s in sources})


@cli.command()
@click.option("--source", type=click.Choice(["court", "llm_a", "llm_b"]), default="court")
@click.option("--backend", required=True)
@click.option("--ft/--no-ft", default=False)
@pass_ctx
def embed(c: Ctx, source, backend, ft):
    """Embed dispute statements into the vector store."""
    _echo({"embedded": c.pipeline.embed(source, backend, ft)})


@cli.command("finetune-pairs")
@click.option("--backend", required=True)
@pass_ctx
def finetune_pairs(c: Ctx, backend):
    """Cluster held-out court disputes and sample same/diff sentence pairs."""
    pairs = c.pipeline.finetune_pairs(backend)
    _echo({"pairs": len(pairs), "same": sum(p.category == "same" for p in pairs)})


@cli.command()
@click.option("--backend", required=True)
@pass_ctx
def finetune(c: Ctx, backend):
    """Fine-tune an embedding backend once on the sampled pairs."""
    p = c.pipeline.provider(backend, True)
    _echo({"model_tag": p.model_tag, "trained": c.pipeline.finetune_calls})


@cli.command()
@click.option("--code", "code_text", required=True, help="Experiment code, e.g. ns_ftlf.")
@pass_ctx
def cluster(c: Ctx, code_text):
    """Cluster all disputes of the code's source."""
    clus = c.pipeline.prepare(_code(code_text))[3]
    _echo({"gamma": clus.gamma, "epsilon": clus.epsilon, "sentences": len(clus.assignments)})


@cli.command()
@click.option("--code", "code_text", required=True)
@pass_ctx
def images(c: Ctx, code_text):
    """Build similarity images for every labeled pair."""
    from .classifier import binarize

    p = c.pipeline
    labeled = binarize(p.labeled_pairs(), p.config.raw.get("barely_as"))
    _echo({"images": len(p.images(_code(code_text), labeled))})


@cli.command()
@click.option("--code", "code_text", required=True)
@click.option("--repeat", type=int, default=0, show_default=True)
@pass_ctx
def train(c: Ctx, code_text, repeat):
    """Train the classifier on one repeat's split and save a checkpoint."""
    from dataclasses import asdict

    from .classifier import save_checkpoint
    from .experiment import repeat_seed

    code = _code(code_text)
    model, metrics = c.pipeline.run_repeat(code, repeat)
    d = c.pipeline.out / "train" / str(code)
    d.mkdir(parents=True, exist_ok=True)
    seed = repeat_seed(c.config.seed, repeat)
    save_checkpoint(d / f"repeat{repeat}", model, c.config.train_hyper(seed), asdict(metrics))
    _echo({"checkpoint": str(d / f"repeat{repeat}.pt"), **asdict(metrics)})


@cli.command()
@click.option("--code", "code_text", required=True)
@click.option("--repeats", type=int)
@pass_ctx
def evaluate(c: Ctx, code_text, repeats):
    """Repeated split/train/test for one experiment code."""
    _echo(c.pipeline.run_experiment(_code(code_text), repeats).summary())


@cli.command()
@click.option("--source", type=click.Choice(["llm_a", "llm_b", "all"]), default="all")
@pass_ctx
def rouge(c: Ctx, source):
    """ROUGE-1/2/L of LLM-listed disputes against court-listed ones."""
    sources = ("llm_a", "llm_b") if source == "all" else (source,)
    reports = c.pipeline.rouge(sources)
    _echo({s: r.to_record()["table"] for s, r in reports.items()})


@cli.command()
@click.option("--repeats", type=int)
@click.option("--codes", help="Comma-separated subset of experiment codes.")
@click.option("--render/--no-render", default=False, help="Also draw boxplot charts (needs matplotlib).")
@pass_ctx
def matrix(c: Ctx, repeats, codes, render):
    """Run every experiment code and write summaries plus boxplot data."""
    from .experiment import emit_plots

    selected = [_code(t.strip()) for t in codes.split(",")] if codes else None
    runs, missing = c.pipeline.run_matrix(selected, repeats)
    if render and runs:
        emit_plots(runs, c.pipeline.out / "matrix", render=True)
    _echo({"summaries": [r.summary() for r in runs], "missing": missing})
    if missing and not runs:
        raise MissingArtifact(next(iter(missing.values())), "no experiment could run")


@cli.command()
@pass_ctx
def stats(c: Ctx):
    """Corpus statistics recorded by ingest."""
    path = c.pipeline.out / "ingest" / "stats.json"
    if not path.exists():
        raise MissingArtifact("ingest", str(path))
    _echo(json.loads(path.read_text(encoding="utf-8")))


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, click.UsageError)):
        return EXIT_CONFIG
    if isinstance(exc, MissingArtifact):
        return EXIT_MISSING
    if isinstance(exc, DataError):
        return EXIT_DATA
    return EXIT_OTHER


def main(argv=None) -> int:
    """Console entry point; maps package errors to exit codes."""
    try:
        rv = cli.main(args=argv, prog_name="casesim", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exit_code(exc)
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_OTHER
    except CaseSimError as exc:
        click.echo(f"error: {exc}", err=True)
        return exit_code(exc)
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
