"""Every worked example registered with the property suite passes."""

import pytest

from mildns.verify import REGISTRY

MODULE_CHECKS = [(g, n, fn) for g, n, fn in REGISTRY if g != "acceptance"]


@pytest.mark.parametrize("group,name,fn", MODULE_CHECKS, ids=[f"{g}-{n}" for g, n, _ in MODULE_CHECKS])
def test_registered_check(group, name, fn):
    passed, detail, _ = fn()
    assert passed, detail


def test_every_module_has_checks():
    groups = {g for g, _, _ in MODULE_CHECKS}
    assert groups == {"spectral_core", "transport", "semigroup", "noise", "fixed_point",
                      "energy_diagnostics", "cli_harness"}
