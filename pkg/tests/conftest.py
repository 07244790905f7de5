"""Session-wide fixtures: synthetic datasets generated once and shared."""

from __future__ import annotations

import pytest

#: one [PASS]/[FAIL] line per end-to-end check, echoed after the run summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance checklist")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from problink import build_vocabulary, ingest, load_kb
from problink.features import build_features
from problink.synth import PlantSpec, generate

#: defaults used by the planted-structure checks
DEFAULT_SPEC = PlantSpec(seed=0)

#: a cheaper corpus for tests that only need realistic shapes
MINI_SPEC = PlantSpec(
    n_problems=6,
    n_targets_per_kind=12,
    n_patients=80,
    n_negatives_per_kind=8,
    seed=7,
)


class SynthData:
    """Paths plus lazily-built derived objects for one generated dataset."""

    def __init__(self, spec, outdir):
        self.spec = spec
        self.outdir = outdir
        self.encounters_path, self.kb_path, self.truth_path = generate(spec, outdir)
        self._store = None
        self._kb = None
        self._vocab = None
        self._features = None

    @property
    def store(self):
        if self._store is None:
            self._store = ingest(self.encounters_path)
        return self._store

    @property
    def kb(self):
        if self._kb is None:
            self._kb = load_kb(self.kb_path)
        return self._kb

    @property
    def vocab(self):
        if self._vocab is None:
            self._vocab = build_vocabulary(self.store, min_count=1)
        return self._vocab

    @property
    def features(self):
        if self._features is None:
            self._features = build_features(
                self.store, self.kb.problems.values(), self.vocab
            )
        return self._features


@pytest.fixture(scope="session")
def default_data(tmp_path_factory) -> SynthData:
    outdir = tmp_path_factory.mktemp("synth_default")
    return SynthData(DEFAULT_SPEC, outdir)


@pytest.fixture(scope="session")
def mini_data(tmp_path_factory) -> SynthData:
    outdir = tmp_path_factory.mktemp("synth_mini")
    return SynthData(MINI_SPEC, outdir)
