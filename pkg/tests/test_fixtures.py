"""The checked-in fixtures must be exactly what the generator script produces."""

import importlib.util
import json

from builders import FIXTURES


def _load_builder():
    spec = importlib.util.spec_from_file_location("build_fixtures", FIXTURES / "build_fixtures.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_fixtures_are_up_to_date(tmp_path):
    written = _load_builder().build(tmp_path)
    assert written
    for path in written:
        rel = path.relative_to(tmp_path)
        assert json.loads(path.read_text()) == json.loads((FIXTURES / rel).read_text()), rel
