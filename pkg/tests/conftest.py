import pytest
from hypothesis import HealthCheck, settings

from tibcad import phantom, pipeline

__author__ = "tibcad contributors"
__copyright__ = "tibcad contributors"
__license__ = "mit"

settings.register_profile(
    "fast", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fast")


@pytest.fixture(scope="session")
def small_spec():
    spec = phantom.PhantomSpec(dims=(64, 64, 8), n_tib_clusters=3,
                               n_vessels=3, seed=5)

    yield spec


@pytest.fixture(scope="session")
def small_phantom(small_spec):
    volume, lungs, tib = phantom.generate(small_spec)

    yield volume, lungs, tib


@pytest.fixture(scope="session")
def small_suite(tmp_path_factory, small_spec):
    """Four TIB and three clean small phantoms plus their manifest"""
    directory = tmp_path_factory.mktemp("suite")
    scans = []
    for scan_id, spec in phantom.generate_suite(small_spec, range(1, 5),
                                                range(21, 24)):
        paths = phantom.write_phantom(str(directory / scan_id), spec)
        scans.append(pipeline.Scan(scan_id, *paths))
    manifest = directory / "manifest.txt"
    pipeline.write_manifest(str(manifest), scans)

    yield str(manifest), scans
