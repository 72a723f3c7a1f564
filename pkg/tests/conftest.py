import pytest

from specsurg import fixtures


@pytest.fixture(scope="session")
def fixture_report():
    """Memoized access to reference-fixture reports, shared across tests."""
    cache = {}

    def get(fixture_id):
        if fixture_id not in cache:
            cache[fixture_id] = fixtures.run_fixture(fixture_id)
        return cache[fixture_id]

    return get


@pytest.fixture(scope="session")
def mixed_problem():
    """The 2x2 mixed-boundary model and its assembled spectrum."""
    spec = fixtures._spec_mixed_boundary()
    return spec, fixtures._scan_mixed(spec)


@pytest.fixture(scope="session")
def surgery_results():
    """The nine reference transforms, built once per session."""
    return fixtures.reference_transforms()
