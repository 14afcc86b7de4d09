"""Service CLI: start the API, print the transition table."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import uvicorn

from .config import ServiceConfig, load_config
from .engine import Engine
from .errors import ConfigError
from .franking import KeyStore
from .lifecycle import transition_table_json
from .service import create_app

SEED_CLOCK = 50_000  # logical seed time in harness mode; after fixture timestamps


def build_engine(config: ServiceConfig, seed_fixtures: bool = False) -> Engine:
    data_dir = Path(config.persistence_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    key_path = config.key_store_path
    if key_path.exists():
        keys = KeyStore.load(key_path)
    else:
        keys = KeyStore.generate()
        key_path.parent.mkdir(parents=True, exist_ok=True)
        keys.save(key_path)
    engine = Engine(config, keys, wal_path=config.wal_path)
    if seed_fixtures and not engine.profiles:
        engine.execute(
            "seed_fixtures", {}, SEED_CLOCK if config.harness_mode else None
        )
    return engine


@click.group()
def main():
    """Reporting-workflow service."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="Config JSON path.")
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--seed-fixtures", is_flag=True, help="Seed the fixture corpus on first start.")
def serve(config_path: str | None, port: int, host: str, seed_fixtures: bool):
    """Start the HTTP service."""
    try:
        config = load_config(config_path) if config_path else ServiceConfig()
        engine = build_engine(config, seed_fixtures=seed_fixtures)
    except ConfigError as exc:
        click.echo(f"refusing to start: {exc.detail}", err=True)
        sys.exit(2)
    app = create_app(engine)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
def transitions():
    """Print the report state transition table as JSON."""
    click.echo(json.dumps(transition_table_json(), indent=2))


if __name__ == "__main__":
    main()
