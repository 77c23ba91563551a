import pytest

from vqlink import codec as cd
from vqlink.harness import System
from vqlink.link import PhyConfig, PhyLink

_CRITERIA = {}
_OUTCOMES = {}


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _CRITERIA[item.nodeid] = mark.args


def pytest_runtest_logreport(report):
    if report.nodeid not in _CRITERIA:
        return
    failed = report.failed or (report.when == "call" and report.outcome != "passed")
    if failed:
        _OUTCOMES[report.nodeid] = "FAIL"
    elif report.when == "call":
        _OUTCOMES.setdefault(report.nodeid, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (number, title) in sorted(_CRITERIA.items(), key=lambda kv: kv[1][0]):
        if nodeid in _OUTCOMES:
            terminalreporter.write_line(f"criterion {number:2d}: {_OUTCOMES[nodeid]}  {title}")


@pytest.fixture(scope="session")
def toy_corpus():
    return cd.toy_corpus(200, seed=0)


@pytest.fixture(scope="session")
def toy_vocab(toy_corpus):
    return cd.ToyVocab.from_corpus(toy_corpus)


@pytest.fixture(scope="session")
def trained(toy_corpus, toy_vocab):
    """A codec trained to memorise the toy corpus, with its K=64, d_z=2 codebook."""
    return cd.train(toy_corpus, toy_vocab, cd.TrainConfig(epochs=30, seed=0))


@pytest.fixture(scope="session")
def make_system(trained, toy_vocab, toy_corpus):
    def build(mode="vq", **phy):
        return System(toy_vocab, trained.params, trained.codebook, PhyLink(PhyConfig(**phy)), mode, trained.codebook.d_z, toy_corpus)

    return build


@pytest.fixture(scope="session")
def artifact_files(tmp_path_factory, trained, toy_vocab, toy_corpus):
    root = tmp_path_factory.mktemp("artifacts")
    cd.save_checkpoint(root / "codec.ckpt", toy_vocab, trained.params, trained.codebook)
    trained.codebook.save(root / "codebook.txt")
    (root / "corpus.txt").write_text("\n".join(toy_corpus) + "\n")
    return root


def write_config(root, name="run.ini", mode="vq", codebook=True, ebn0="2,6", trials=3, channel="TDL-A", extra=""):
    lines = ["[pipeline]", f"mode = {mode}", "checkpoint = codec.ckpt", "corpus = corpus.txt", f"ebn0_db = {ebn0}", f"trials = {trials}", "master_seed = 11"]
    if codebook:
        lines.append("codebook = codebook.txt")
    lines += ["[phy]", f"channel = {channel}", extra]
    path = root / name
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def config_writer(artifact_files):
    return lambda **kw: write_config(artifact_files, **kw)
