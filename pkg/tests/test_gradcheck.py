import pytest
import torch

from helpers import TINY, batch, tiny_data, with_
from vpp.global_vpp import OverlayConfig
from vpp.mini_mllm.gradcheck import CoordCheck, GradCheckReport, check_gradients, grad_check
from vpp.mini_mllm.model import GROUPS, Fusion, VPPModel

VOCAB, EXAMPLES = tiny_data(n=3)


def test_linear_map_is_exact():
    torch.manual_seed(0)
    lin = torch.nn.Linear(6, 4, dtype=torch.float64)
    x = torch.randn(5, 6, dtype=torch.float64)
    coords = [(0, (i, j)) for i in range(4) for j in range(6)] + [(1, (i,)) for i in range(4)]
    rep = check_gradients(
        lambda: (lin(x) * torch.arange(4, dtype=torch.float64)).sum(),
        [("lin", "weight", lin.weight), ("lin", "bias", lin.bias)],
        coords,
    )
    assert rep.max_rel_error < 1e-8


def test_full_model_passes_with_masked_zeros():
    m = VPPModel(with_(overlay=OverlayConfig(0.95, 4), fusion=Fusion.CROSS_ATTN_LP_Q), VOCAB)
    rep = grad_check(m, *batch(EXAMPLES), n_coords=200, n_masked=6)
    assert rep.n >= 200
    assert rep.groups_covered == set(GROUPS)
    assert rep.pass_fraction >= 0.99, rep.summary()
    assert rep.n_below_floor < rep.n // 4
    assert len(rep.masked) == 6
    for c in rep.masked:
        assert c.analytic == 0.0 and abs(c.numeric) < 1e-8


def test_coord_check_tolerance():
    assert CoordCheck("g", "w", (0,), 1.0, 1.00001).ok(1e-4)
    assert not CoordCheck("g", "w", (0,), 1.0, 1.1).ok(1e-4)
    assert CoordCheck("g", "w", (0,), 0.0, 1e-12).ok(1e-4)
    # the floor needs both gradients tiny, not just a tiny difference
    assert not CoordCheck("g", "w", (0,), 2e-9, 2.1e-9).ok(1e-4)
    assert not CoordCheck("g", "w", (0,), 0.0, 1e-6).ok(1e-4)


def test_report_ignores_floor_coords_in_max_error():
    rep = GradCheckReport([CoordCheck("g", "w", (0,), 0.0, 1e-12), CoordCheck("g", "w", (1,), 1.0, 1.00001)])
    assert rep.n_below_floor == 1
    assert rep.max_rel_error == pytest.approx(1e-5, rel=1e-3)
