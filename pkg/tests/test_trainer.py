import json
import math

import pytest
import torch

from conftest import make_interpreter, make_trainer
from tesgan.checkpoint import CheckpointError, load_checkpoint
from tesgan.interpreter import TrainingDiverged
from tesgan.trainer import DecodeConfig, TrainConfig, load_generator, random_noise_baseline, synthesize, to_text


def test_rejects_unfrozen_interpreter(toy_tokenizer):
    with pytest.raises(ValueError, match="frozen"):
        make_trainer(make_interpreter(toy_tokenizer))


def test_train_config_validation():
    for bad in ({"lr_generator": 0}, {"g_updates_per_step": 0}, {"mode": "wgan"}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_loss_log_and_checkpoints(tiny_interp, toy_seeds, tmp_path):
    trainer = make_trainer(tiny_interp, run_dir=tmp_path, batch=8)
    state = trainer.fit(toy_seeds[:32])
    rows = [json.loads(line) for line in (tmp_path / "loss_log.jsonl").read_text().splitlines()]
    assert len(rows) == state.d_updates + state.g_updates == 4 + 16
    assert [r["phase"] for r in rows[:4]] == ["d"] * 4
    assert {r["epoch"] for r in rows if r["phase"] == "d"} == {1}
    assert [p.rsplit("/", 1)[-1] for p in state.checkpoints] == ["epoch_001.pt", "epoch_002.pt"]
    ck = load_checkpoint(state.checkpoints[-1], kind="adversarial")
    assert ck["counters"] == {"d_updates": 4, "g_updates": 16} and ck["meta"]["epoch"] == 2
    with pytest.raises(CheckpointError):
        load_checkpoint(state.checkpoints[-1], kind="interpreter")


def test_seeded_runs_reproduce_losses(tiny_interp, toy_seeds):
    a = make_trainer(tiny_interp, seed=5).fit(toy_seeds).loss_log
    b = make_trainer(tiny_interp, seed=5).fit(toy_seeds).loss_log
    assert a == b


def test_d_step_leaves_generator_untouched(tiny_interp, toy_seeds):
    trainer = make_trainer(tiny_interp)
    before = [p.clone() for p in trainer.g.parameters()]
    trainer.d_step(torch.as_tensor(toy_seeds[:4]))
    assert all(torch.equal(a, b) for a, b in zip(before, trainer.g.parameters()))
    assert all(p.grad is None for p in trainer.g.parameters())


def test_g_step_leaves_discriminators_untouched(tiny_interp, toy_seeds):
    trainer = make_trainer(tiny_interp)
    before = [p.clone() for m in (trainer.ssd, trainer.sod) for p in m.parameters()]
    trainer.g_step(torch.as_tensor(toy_seeds[:4]))
    after = [p for m in (trainer.ssd, trainer.sod) for p in m.parameters()]
    assert all(torch.equal(a, b) for a, b in zip(before, after))
    assert all(p.requires_grad for p in after)


def test_p_tesgan_perturbs_fake_seeds(tiny_interp):
    plain = make_trainer(tiny_interp)._fake(64)
    noisy = make_trainer(tiny_interp, mode="p-tesgan", sigma=0.5)._fake(64)
    assert ((plain > 0) & (plain < 1)).all()
    assert ((noisy < 0) | (noisy > 1)).any()


def test_non_finite_loss_aborts(tiny_interp, toy_seeds, monkeypatch):
    trainer = make_trainer(tiny_interp)
    monkeypatch.setattr("tesgan.trainer.sfp_loss", lambda *a, **k: torch.tensor(float("inf")))
    with pytest.raises(TrainingDiverged, match="g-step"):
        trainer.fit(toy_seeds)


def test_synthesis_contract(tiny_interp, toy_seeds, toy_tokenizer, tmp_path):
    trainer = make_trainer(tiny_interp, run_dir=tmp_path, epochs=1)
    state = trainer.fit(toy_seeds)
    g, meta = load_generator(state.checkpoints[-1])
    assert meta["mode"] == "tesgan" and not any(p.requires_grad for p in g.parameters())
    cfg = DecodeConfig(max_new_tokens=10, batch=7)
    seqs = synthesize(tiny_interp, g, 20, cfg, torch.Generator().manual_seed(0))
    assert len(seqs) == 20
    assert all(len(s) <= 10 and tiny_interp.cfg.sep_id not in s and all(0 <= t < tiny_interp.cfg.vocab_size for t in s) for s in seqs)
    assert seqs == synthesize(tiny_interp, g, 20, cfg, torch.Generator().manual_seed(0))
    assert len(to_text(seqs, toy_tokenizer)) == 20
    with pytest.raises(ValueError):
        synthesize(tiny_interp, g, 0)


def test_random_noise_baseline(tiny_interp):
    seqs = random_noise_baseline(tiny_interp, 9, DecodeConfig(max_new_tokens=5, batch=4), torch.Generator().manual_seed(0))
    assert len(seqs) == 9 and all(len(s) <= 5 for s in seqs)
    assert seqs == random_noise_baseline(tiny_interp, 9, DecodeConfig(max_new_tokens=5, batch=4), torch.Generator().manual_seed(0))
    with pytest.raises(ValueError):
        random_noise_baseline(tiny_interp, -1)


@pytest.mark.parametrize(
    "switches",
    [
        {"use_ssd": False, "use_sod": False},
        {"use_sdp": False, "use_sfp": False},
        {"use_ssd": False, "use_sdp": False},
    ],
)
def test_ablations_train(tiny_interp, toy_seeds, switches):
    trainer = make_trainer(tiny_interp, epochs=1, **switches)
    state = trainer.fit(toy_seeds)
    assert state.g_updates == 2 * math.ceil(len(toy_seeds) / 4)
    fields = {"use_ssd": "bce_ssd", "use_sod": "bce_sod", "use_sdp": "sdp", "use_sfp": "sfp"}
    enabled = [f for k, f in fields.items() if switches.get(k, True)]
    for row in state.loss_log:
        if row["phase"] == "g":
            assert row["total"] == pytest.approx(sum(row[f] for f in enabled), rel=1e-5)
