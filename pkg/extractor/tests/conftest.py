import pytest
from tiny_checkpoint import build_checkpoint


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory) -> str:
    return build_checkpoint(tmp_path_factory.mktemp("tiny_ckpt"))
