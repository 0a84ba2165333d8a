import json
from pathlib import Path

import pytest

from dialogue_forge.ontology import bundled_pack_path, load_domain_pack
from dialogue_forge.pipeline import load_template_table
from dialogue_forge.session import SystemConfig, UserConfig, run_episodes


@pytest.fixture(scope="session")
def pack_path() -> Path:
    return bundled_pack_path()


@pytest.fixture(scope="session")
def pack(pack_path):
    schemas, db = load_domain_pack(pack_path)
    return schemas, db


@pytest.fixture(scope="session")
def schemas(pack):
    return pack[0]


@pytest.fixture(scope="session")
def db(pack):
    return pack[1]


@pytest.fixture(scope="session")
def templates(pack_path):
    return load_template_table(pack_path)


@pytest.fixture(scope="session")
def raw_database(pack_path):
    return json.loads((Path(pack_path) / "database.json").read_text())


@pytest.fixture(scope="session")
def noiseless_corpus(pack_path):
    return run_episodes(
        pack_path, SystemConfig(), UserConfig(), episodes=60, base_seed=100
    )
