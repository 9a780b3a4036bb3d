import pytest

from laakso_lab import Params, build_instance


@pytest.fixture(scope="session")
def inst_k2():
    return build_instance(Params(p=4, eps=1 / 16, k=2))


@pytest.fixture(scope="session")
def inst_k3():
    return build_instance(Params(p=4, eps=1 / 16, k=3))
