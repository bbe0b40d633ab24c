# conftest.py - keep test runs from writing run logs or outputs into the working tree

import pytest


@pytest.fixture(autouse=True)
def _isolated_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
