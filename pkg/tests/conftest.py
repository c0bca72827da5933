import hashlib
import json
from pathlib import Path

import pytest

import qdesign

_RESULTS: dict[str, list[str]] = {}


def record(criterion: int, ok: bool | None, detail: str) -> None:
    """Collect one acceptance line; ``ok=None`` marks a skipped criterion."""
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    _RESULTS.setdefault(f"{criterion:02d}", []).append(f"criterion {criterion}: {status} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS):
        for line in _RESULTS[key]:
            terminalreporter.write_line(line)


def source_digest() -> str:
    """Digest of the sample-generating modules, so cached samples go stale on code changes."""
    h = hashlib.sha256()
    root = Path(qdesign.__file__).parent
    for name in ("quantum.py", "ensembles.py", "correlators.py", "config.py", "pipeline.py"):
        h.update((root / name).read_bytes())
    return h.hexdigest()[:16]


@pytest.fixture(scope="session")
def sample_cache(request):
    """Directory for generated arrays keyed by config and source digest."""
    root = Path(request.config.cache.mkdir("qdesign-samples"))

    def path_for(kind: str, params: dict) -> Path:
        key = json.dumps({"kind": kind, "src": source_digest(), **params}, sort_keys=True)
        return root / f"{kind}-{hashlib.sha256(key.encode()).hexdigest()[:20]}.npy"

    return path_for
