import pytest

from sceneq import testkit
from sceneq.storage import ingest_dataset
from sceneq.udfs import UdfRegistry, UdfSignature, make_value_lookup


@pytest.fixture(scope="session")
def dataset():
    """The seed-42 dataset: 10 videos x 64 frames x 5 objects."""
    return testkit.build_dataset(testkit.SyntheticSpec(seed=42))


@pytest.fixture(scope="session")
def dataset_dir(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("seed42")
    manifest = dataset.write(out)
    return manifest


@pytest.fixture(scope="session")
def db(dataset):
    """Read-only database view of the seed-42 dataset; tests that mutate
    (materialization) must build their own copy."""
    return dataset.to_db()


@pytest.fixture()
def fresh_db(dataset):
    return dataset.to_db()


def registry_for(dataset, exclude=()):
    reg = UdfRegistry()
    for oname in sorted({o.oname for o in dataset.objects}):
        reg.register(make_value_lookup(
            UdfSignature(oname, 1, f"Whether o0 is a {oname}")))
    for concept in dataset.rules.names():
        if concept in exclude:
            continue
        reg.register(make_value_lookup(UdfSignature(
            concept, dataset.rules.arity(concept),
            testkit.CONCEPT_DESCRIPTIONS[concept])))
    return reg


@pytest.fixture(scope="session")
def registry(dataset):
    return registry_for(dataset)


@pytest.fixture(scope="session")
def e2e_suite(dataset):
    """Frozen self-enhancement cases + the mock-client fixture for them."""
    cases = testkit.build_e2e_suite(dataset, n_cases=10, seed=0)
    fixture = testkit.mock_fixture_for_cases(cases, dataset)
    return cases, fixture


@pytest.fixture(scope="session")
def case_workspaces(dataset, e2e_suite, tmp_path_factory):
    """Per-case variant dataset directories plus the shared fixture file."""
    cases, fixture = e2e_suite
    root = tmp_path_factory.mktemp("e2e")
    fixture_path = testkit.write_mock_fixture(root / "fixtures.json", fixture)
    manifests = {}
    for case in cases:
        manifests[case.index] = dataset.write(root / f"case{case.index}",
                                              exclude_concepts=case.missing)
    return cases, manifests, fixture_path


@pytest.fixture(scope="session")
def small_image_dataset(tmp_path_factory):
    """Tiny rendered dataset for pixel-path tests."""
    spec = testkit.SyntheticSpec(seed=7, n_videos=2, n_frames=6, n_objects=3,
                                 width=96, height=72, render_images=True)
    ds = testkit.build_dataset(spec)
    out = tmp_path_factory.mktemp("imgds")
    manifest = ds.write(out)
    return ds, ingest_dataset(manifest)
