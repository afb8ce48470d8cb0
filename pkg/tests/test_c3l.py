"""Contrastive buffer FIFO semantics and supervised-contrastive loss."""

import math

import pytest
import torch

from pcad.contrast import ContrastBuffer, c3l_total, scl_loss


def unit(v):
    t = torch.tensor(v, dtype=torch.float64)
    return t / t.norm()


def brute_scl(z, c, entries, tau):
    """Direct transcription: mean over positives of -log softmax sim."""
    sims = [float(z @ e) / tau for e, _ in entries]
    log_denom = math.log(sum(math.exp(s) for s in sims))
    pos = [s for s, (_, lab) in zip(sims, entries) if lab == c]
    if not pos:
        return None
    return sum(log_denom - s for s in pos) / len(pos)


class TestBuffer:
    def test_fifo_eviction_capacity_two(self):
        buf = ContrastBuffer(capacity=2)
        a, b, c = unit([1.0, 0.0]), unit([0.0, 1.0]), unit([1.0, 1.0])
        buf.push(a, 1)
        buf.push(b, 2)
        buf.push(c, 3)
        assert len(buf) == 2
        assert buf.labels() == [2, 3]
        assert torch.equal(buf.embeddings()[0], b)
        assert torch.equal(buf.embeddings()[1], c)

    def test_stored_equals_pushed_and_detached(self):
        buf = ContrastBuffer(capacity=4)
        z = unit([3.0, 4.0]).requires_grad_(True)
        buf.push(z, 1)
        stored = buf.embeddings()[0]
        assert torch.equal(stored, z.detach())
        assert not stored.requires_grad

    def test_default_capacity_holds_sixty_four(self, rng):
        buf = ContrastBuffer()
        for i in range(80):
            buf.push(unit(rng.normal(size=8)), i % 3 + 1)
        assert len(buf) == 64
        assert buf.labels()[0] == 16 % 3 + 1

    def test_non_unit_vector_rejected(self):
        buf = ContrastBuffer(capacity=4)
        with pytest.raises(ValueError):
            buf.push(torch.tensor([1.0, 1.0], dtype=torch.float64), 1)

    def test_capacity_validated(self):
        with pytest.raises(ValueError):
            ContrastBuffer(capacity=0)

    def test_state_dict_round_trip(self):
        buf = ContrastBuffer(capacity=4)
        buf.push(unit([1.0, 2.0]), 2)
        state = buf.state_dict()
        assert state["capacity"] == 4
        assert state["labels"] == [2]


class TestSclLoss:
    def test_empty_buffer_sentinel(self):
        buf = ContrastBuffer(capacity=4)
        assert scl_loss(unit([1.0, 0.0]), 1, buf) is None

    def test_no_positive_sentinel(self):
        buf = ContrastBuffer(capacity=4)
        buf.push(unit([1.0, 0.0]), 2)
        assert scl_loss(unit([1.0, 0.0]), 1, buf) is None

    def test_single_identical_positive_is_zero(self):
        buf = ContrastBuffer(capacity=4)
        z = unit([1.0, 0.0])
        buf.push(z, 1)
        assert float(scl_loss(z, 1, buf, tau=0.07)) == pytest.approx(0.0, abs=1e-12)

    def test_two_entry_worked_example(self):
        # positive sim 1, negative sim 0, tau=1:
        # loss = log(e^1 + e^0) - 1 = log(1 + e^-1)
        buf = ContrastBuffer(capacity=4)
        buf.push(unit([1.0, 0.0]), 1)
        buf.push(unit([0.0, 1.0]), 2)
        got = float(scl_loss(unit([1.0, 0.0]), 1, buf, tau=1.0))
        assert got == pytest.approx(math.log(1 + math.exp(-1.0)), abs=1e-12)
        assert got == pytest.approx(0.3133, abs=5e-5)

    def test_against_brute_force(self, rng):
        for trial in range(10):
            buf = ContrastBuffer(capacity=8)
            entries = []
            for _ in range(6):
                e = unit(rng.normal(size=5))
                lab = int(rng.integers(1, 4))
                buf.push(e, lab)
                entries.append((e, lab))
            z = unit(rng.normal(size=5))
            c = int(rng.integers(1, 4))
            want = brute_scl(z, c, entries, tau=0.07)
            got = scl_loss(z, c, buf, tau=0.07)
            if want is None:
                assert got is None
            else:
                assert float(got) == pytest.approx(want, abs=1e-10)

    def test_gradient_does_not_reach_buffer(self):
        buf = ContrastBuffer(capacity=4)
        src = unit([1.0, 1.0]).requires_grad_(True)
        buf.push(src, 1)
        z = unit([1.0, 0.0]).requires_grad_(True)
        loss = scl_loss(z, 1, buf, tau=0.5)
        loss.backward()
        assert z.grad is not None
        assert src.grad is None

    def test_tau_validated(self):
        buf = ContrastBuffer(capacity=4)
        buf.push(unit([1.0, 0.0]), 1)
        with pytest.raises(ValueError):
            scl_loss(unit([1.0, 0.0]), 1, buf, tau=0.0)


class TestTotal:
    def test_worked_example(self):
        scl = torch.tensor(2.0, dtype=torch.float64)
        cls = torch.tensor(1.0, dtype=torch.float64)
        cos = torch.tensor(0.9, dtype=torch.float64)
        got = c3l_total(scl, cls, cos, 0.001, 0.001, 0.01)
        assert float(got) == pytest.approx(0.012, abs=1e-12)

    def test_zero_weights_zero(self):
        got = c3l_total(torch.tensor(5.0), torch.tensor(5.0), torch.tensor(5.0), 0.0, 0.0, 0.0)
        assert float(got) == 0.0

    def test_skipped_scl_drops_out(self):
        got = c3l_total(None, torch.tensor(1.0, dtype=torch.float64),
                        torch.tensor(1.0, dtype=torch.float64), 1.0, 2.0, 3.0)
        assert float(got) == pytest.approx(5.0)

    def test_linearity_in_scl_weight(self, rng):
        vals = [torch.tensor(float(v)) for v in rng.normal(size=3) ** 2]
        base = float(c3l_total(*vals, 0.2, 0.3, 0.4))
        bumped = float(c3l_total(*vals, 1.2, 0.3, 0.4))
        assert bumped - base == pytest.approx(float(vals[0]), abs=1e-6)

    def test_negative_weight_rejected(self):
        one = torch.tensor(1.0)
        with pytest.raises(ValueError):
            c3l_total(one, one, one, -0.1, 0.0, 0.0)

    def test_monotone_in_scl(self):
        one = torch.tensor(1.0)
        lo = c3l_total(one, one, one, 0.5, 0.5, 0.5)
        hi = c3l_total(torch.tensor(2.0), one, one, 0.5, 0.5, 0.5)
        assert float(hi) > float(lo)
