"""Acceptance checks, one marker per criterion; the summary prints a PASS/FAIL line for each."""
import json
import math
import time

import numpy as np
import pytest
import torch

import conftest
from conftest import make_interpreter, make_trainer
from tesgan.cli import main
from tesgan.config import load_config
from tesgan.corpus import all_sentences, load_corpus, seed_sentences
from tesgan.discriminators import DiscriminatorConfig, init_discriminators
from tesgan.evaluation import dsr, fbd_from_features, lm_score, msj, self_bleu
from tesgan.generator import GeneratorConfig, NoiseSpec, init_generator, sample_noise
from tesgan.interpreter import checksum, load_interpreter
from tesgan.objectives import bce, g_step_loss, sdp_loss, sfp_loss
from tesgan.tokenizer import BPETokenizer, word_tokens
from tesgan.trainer import DecodeConfig, load_generator, random_noise_baseline, synthesize

L = 16


# -- 1. metric oracles ------------------------------------------------------------


def _exact_cloud(mu, sigma, n, rng):
    """n points whose sample mean and covariance are exactly (mu, sigma)."""
    z = rng.normal(size=(n, len(mu)))
    z -= z.mean(0)
    z = z @ np.linalg.inv(np.linalg.cholesky(np.cov(z, rowvar=False))).T
    return mu + z @ np.linalg.cholesky(sigma).T


def _frechet_2d(mu1, s1, mu2, s2):
    # for 2x2 M with real non-negative eigenvalues, tr(sqrt(M)) = sqrt(tr M + 2 sqrt(det M))
    m = s1 @ s2
    tr_sqrt = math.sqrt(np.trace(m) + 2 * math.sqrt(np.linalg.det(m)))
    return math.sqrt(float(np.sum((mu1 - mu2) ** 2)) + np.trace(s1) + np.trace(s2) - 2 * tr_sqrt)


@pytest.mark.criterion(1)
@pytest.mark.parametrize("case", range(5))
def test_fbd_matches_closed_form_2d(case):
    rng = np.random.default_rng(case)
    mus = [rng.normal(size=2) * 3 for _ in range(2)]
    sigmas = []
    for _ in range(2):
        a = rng.normal(size=(2, 2))
        sigmas.append(a @ a.T + 0.1 * np.eye(2))
    real = _exact_cloud(mus[0], sigmas[0], 400, rng)
    fake = _exact_cloud(mus[1], sigmas[1], 300, rng)
    assert fbd_from_features(real, fake) == pytest.approx(_frechet_2d(mus[0], sigmas[0], mus[1], sigmas[1]), abs=1e-4)


@pytest.mark.criterion(1)
def test_msj_three_sentence_fixture():
    assert msj([["a", "b", "c"]], [["a", "b", "d"]], 2) == 1 / 3


@pytest.mark.criterion(1)
def test_dsr_reference_row():
    # 1000 sentences, 936 distinct, none copied from training
    syn = [[f"w{i}"] for i in range(936)] + [["w0"]] * 64
    score, r_syn, r_unq = dsr(syn, [["unrelated", "sentence"]], max_len=16)
    assert (r_syn, r_unq) == (1.0, 0.936)
    assert abs(score - 0.967) <= 5e-4


@pytest.mark.criterion(1)
def test_self_bleu_matches_reference_implementation():
    nltk_bleu = pytest.importorskip("nltk.translate.bleu_score")
    sents = [
        word_tokens("the cat sat on the mat today"),
        word_tokens("the cat is on the mat"),
        word_tokens("a dog sat on a log near the mat"),
    ]
    smooth = nltk_bleu.SmoothingFunction().method1
    for n in (2, 3, 4):
        weights = (1 / n,) * n
        expected = np.mean([
            nltk_bleu.sentence_bleu(sents[:i] + sents[i + 1 :], s, weights=weights, smoothing_function=smooth)
            for i, s in enumerate(sents)
        ])
        assert self_bleu(sents, n) == pytest.approx(expected, abs=1e-6)


@pytest.mark.criterion(1)
def test_metric_suite_runtime():
    start = time.perf_counter()
    for case in range(5):
        test_fbd_matches_closed_form_2d(case)
    test_msj_three_sentence_fixture()
    test_dsr_reference_row()
    test_self_bleu_matches_reference_implementation()
    assert time.perf_counter() - start < 60


# -- 2. loss identities -------------------------------------------------------------


@pytest.mark.criterion(2)
def test_bce_at_half_is_ln2():
    half = torch.tensor([0.5], dtype=torch.float64)
    assert abs(bce(half, torch.ones(1, dtype=torch.float64)).item() - math.log(2)) <= 1e-9
    assert abs(bce(half, torch.zeros(1, dtype=torch.float64)).item() - math.log(2)) <= 1e-9


@pytest.mark.criterion(2)
def test_sdp_zero_on_identical_and_nonnegative(tiny_interp_double):
    m = tiny_interp_double
    g = torch.Generator().manual_seed(0)
    for _ in range(10):
        h = torch.rand(4, L, m.d, generator=g, dtype=torch.float64)
        assert abs(sdp_loss(m, h, h).item()) <= 1e-12
    # 1,000 pairs: independent draws plus near-identical ones
    real = torch.rand(1000, L, m.d, generator=g, dtype=torch.float64)
    fake = torch.rand(1000, L, m.d, generator=g, dtype=torch.float64)
    fake[500:] = (real[500:] + 1e-4 * torch.randn(500, L, m.d, generator=g, dtype=torch.float64)).clamp(0, 1)
    values = [sdp_loss(m, real[i : i + 1], fake[i : i + 1]).item() for i in range(1000)]
    assert min(values) >= 0.0


@pytest.mark.criterion(2)
def test_sfp_zero_and_uniform_offset():
    g = torch.Generator().manual_seed(0)
    h = torch.rand(8, L, 32, generator=g, dtype=torch.float64)
    assert sfp_loss(h, h).item() == 0.0
    for c in (0.1, -0.05, 0.3):
        # per-position means shift by c: L c^2, plus mean |c|
        assert abs(sfp_loss(h, h + c).item() - (L * c * c + abs(c))) <= 1e-6
    assert abs(sfp_loss(h, h + 0.1).item() - 0.26) <= 1e-6


# -- 3. gradients ----------------------------------------------------------------------


def _rel_err(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)


def _central_difference(f, x, index, eps=1e-6):
    with torch.no_grad():
        orig = x[index].item()
        x[index] = orig + eps
        up = f().item()
        x[index] = orig - eps
        down = f().item()
        x[index] = orig
    return (up - down) / (2 * eps)


@pytest.mark.criterion(3)
@pytest.mark.parametrize("which", ["sdp", "sfp"])
def test_seed_loss_gradients(tiny_interp_double, which):
    m = tiny_interp_double
    g = torch.Generator().manual_seed(1)
    real = torch.rand(3, L, m.d, generator=g, dtype=torch.float64)
    fake = torch.rand(3, L, m.d, generator=g, dtype=torch.float64, requires_grad=True)
    loss = (lambda: sdp_loss(m, real, fake)) if which == "sdp" else (lambda: sfp_loss(real, fake))
    (grad,) = torch.autograd.grad(loss(), fake)
    for _ in range(8):
        idx = tuple(int(torch.randint(s, (1,), generator=g)) for s in fake.shape)
        assert _rel_err(grad[idx].item(), _central_difference(loss, fake.data, idx)) <= 1e-3


@pytest.mark.criterion(3)
def test_g_step_gradient_wrt_generator_parameters(tiny_interp_double):
    m = tiny_interp_double
    d = m.d
    gen = init_generator(GeneratorConfig(L=L, d=d, noise_channels=16, hidden_filters=8, upsample=8), torch.Generator().manual_seed(0)).double()
    ssd, sod = init_discriminators(DiscriminatorConfig(L=L, d=d, ssd_heads=2, sod_hidden=16, ssd_dropout=0.0), torch.Generator().manual_seed(1))
    ssd, sod = ssd.double().eval(), sod.double().eval()
    for p in (*ssd.parameters(), *sod.parameters()):
        p.requires_grad_(False)
    rng = torch.Generator().manual_seed(2)
    noise = sample_noise(gen.noise_spec, 4, rng).double()
    real = m.embed_seed(torch.randint(3, m.cfg.vocab_size, (4, L), generator=rng))

    def loss():
        fake = gen(noise)
        return g_step_loss(ssd(fake), sod(fake), sdp_loss(m, real, fake), sfp_loss(real, fake)).total

    params = list(gen.parameters())
    grads = torch.autograd.grad(loss(), params)
    picks = torch.Generator().manual_seed(3)
    for _ in range(5):
        k = int(torch.randint(len(params), (1,), generator=picks))
        idx = tuple(int(torch.randint(s, (1,), generator=picks)) for s in params[k].shape)
        numeric = _central_difference(loss, params[k].data, idx)
        assert _rel_err(grads[k][idx].item(), numeric) <= 1e-3, (k, idx, grads[k][idx].item(), numeric)


# -- 4. schedule -----------------------------------------------------------------------


def _snapshot(*modules):
    return [p.detach().clone() for mod in modules for p in mod.parameters()]


@pytest.mark.criterion(4)
def test_two_epoch_schedule(tiny_interp, toy_corpus, toy_tokenizer):
    seeds = torch.as_tensor(seed_sentences(toy_corpus, L, toy_tokenizer)[:40])
    trainer = make_trainer(tiny_interp, batch=4, epochs=2)
    interp_sum = checksum(tiny_interp)
    discs = (trainer.ssd, trainer.sod)
    start = _snapshot(*discs)
    trainer.run_epoch(seeds)
    after_1 = _snapshot(*discs)
    assert checksum(tiny_interp) == interp_sum
    assert all(not torch.equal(a, b) for a, b in zip(start, after_1) if a.numel() > 1)
    g_before = _snapshot(trainer.g)
    trainer.run_epoch(seeds)
    after_2 = _snapshot(*discs)
    assert all(torch.equal(a, b) for a, b in zip(after_1, after_2))
    assert any(not torch.equal(a, b) for a, b in zip(g_before, _snapshot(trainer.g)))
    assert checksum(tiny_interp) == interp_sum
    s = trainer.state
    assert (s.d_updates, s.g_updates) == (10, 40)
    phases = [r["phase"] for r in s.loss_log]
    assert phases.count("d") == 10 and phases.count("g") == 40
    assert {r["epoch"] for r in s.loss_log if r["phase"] == "d"} == {1}


# -- 5. shapes and ranges ---------------------------------------------------------------


@pytest.mark.criterion(5)
def test_embed_seed_range_over_draws(toy_tokenizer):
    m = make_interpreter(toy_tokenizer, d=128, n_head=4).freeze()
    g = torch.Generator().manual_seed(0)
    ids = torch.randint(0, m.cfg.vocab_size, (1000, L), generator=g)
    h = m.embed_seed(ids)
    assert h.shape == (1000, L, 128)
    assert bool(((h > 0) & (h < 1)).all())


@pytest.mark.criterion(5)
@pytest.mark.parametrize("d", [128, 768])
def test_generator_range_over_draws(d):
    gen = init_generator(GeneratorConfig(L=L, d=d), torch.Generator().manual_seed(0))
    rng = torch.Generator().manual_seed(1)
    with torch.no_grad():
        for batch in (500, 500):
            h = gen.sample(batch, rng)
            assert h.shape == (batch, L, d)
            assert bool(((h > 0) & (h < 1)).all())


@pytest.mark.criterion(5)
def test_noise_in_half_open_interval():
    z = sample_noise(NoiseSpec(), 1000, torch.Generator().manual_seed(0))
    assert z.shape == (1000, 256, 1)
    assert z.min().item() >= -10.0 and z.max().item() < 10.0
    # both ends are actually reached
    assert z.min().item() < -9.99 and z.max().item() > 9.99


@pytest.mark.criterion(5)
def test_generator_init_std():
    gen = init_generator(GeneratorConfig(), torch.Generator().manual_seed(0))
    values = torch.cat([p.detach().flatten() for p in gen.parameters()])
    assert 0.07 <= values.std().item() <= 0.09
    for p in gen.parameters():
        assert 0.07 <= p.detach().std().item() <= 0.09


# -- 6 and 7. miniature end-to-end -------------------------------------------------------


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    start = time.perf_counter()
    assert main(["toy-corpus", "--out", str(root)]) == 0
    assert main(["run", "--config", str(root / "toy.ini")]) == 0
    return root, load_config(root / "toy.ini"), time.perf_counter() - start


@pytest.fixture(scope="module")
def final_synthesis(toy_run):
    root, cfg, _ = toy_run
    run = cfg.out_dir
    interp = load_interpreter(run / "interpreter.pt")
    tok = BPETokenizer.load(run / "tokenizer.json")
    g, meta = load_generator(run / "checkpoints" / f"epoch_{cfg.train.epochs:03d}.pt")
    decode = DecodeConfig(max_new_tokens=cfg.decode.max_new_tokens)
    syn = synthesize(interp, g, 100, decode, torch.Generator().manual_seed(0))
    noise = random_noise_baseline(interp, 100, decode, torch.Generator().manual_seed(0), L=cfg.data.L)
    return interp, tok, meta, syn, noise


@pytest.mark.criterion(6)
def test_toy_run_configuration(toy_run):
    _, cfg, elapsed = toy_run
    assert len(load_corpus(cfg.data.train, cfg.data.format)) == 100
    assert (cfg.interpreter.n_layer, cfg.interpreter.d, cfg.data.L) == (2, 128, 16)
    assert (cfg.pretrain.epochs, cfg.train.epochs) == (20, 6)
    assert elapsed < 2 * 3600


@pytest.mark.criterion(6)
def test_toy_run_losses_finite(toy_run):
    run = toy_run[1].out_dir
    history = json.loads((run / "pretrain_history.json").read_text())
    assert len(history) == 21 and all(math.isfinite(h["loss"]) for h in history[1:])
    rows = [json.loads(line) for line in (run / "loss_log.jsonl").read_text().splitlines()]
    assert rows and all(math.isfinite(v) for r in rows for k, v in r.items() if k not in ("phase",))
    assert {r["epoch"] for r in rows} == set(range(1, 7))


@pytest.mark.criterion(6)
def test_toy_synthesis_is_valid(final_synthesis, toy_run):
    interp, tok, meta, syn, _ = final_synthesis
    assert meta["epoch"] == 6 and len(syn) == 100
    vocab, max_new = interp.cfg.vocab_size, toy_run[1].decode.max_new_tokens
    specials = {interp.cfg.pad_id, interp.cfg.cls_id, interp.cfg.sep_id}
    for seq in syn:
        assert len(seq) <= max_new
        assert all(isinstance(t, int) and 0 <= t < vocab for t in seq)
        assert not specials & set(seq)
    best = (toy_run[1].out_dir / "synth" / "best.txt").read_text(encoding="utf-8").splitlines()
    assert len(best) == 100


@pytest.mark.criterion(6)
def test_toy_synthesis_dsr(final_synthesis, toy_run):
    _, tok, _, syn, _ = final_synthesis
    cfg = toy_run[1]
    train = [word_tokens(s) for s in all_sentences(load_corpus(cfg.data.train, cfg.data.format))]
    score, r_syn, r_unq = dsr([word_tokens(tok.decode(s)) for s in syn], train, cfg.data.L)
    print(f"toy DSR {score:.3f} (R_syn {r_syn:.3f}, R_unq {r_unq:.3f})")
    assert score >= 0.5


@pytest.mark.criterion(6)
def test_random_noise_baseline_scores_worse(final_synthesis):
    interp, _, _, syn, noise = final_synthesis
    trained, baseline = lm_score(syn, interp), lm_score(noise, interp)
    print(f"toy LM score: generator {trained:.3f}, random-noise baseline {baseline:.3f}")
    assert baseline > trained


@pytest.mark.criterion(7)
def test_fbd_trend_informational(toy_run):
    metrics = json.loads((toy_run[1].out_dir / "epoch_metrics.json").read_text())
    fbd = {m["epoch"]: m["fbd"] for m in metrics}
    first, best_later = fbd[1], min(v for e, v in fbd.items() if e >= 2)
    holds = best_later <= first
    conftest.record_informational(7, holds, f"epoch-1 FBD {first:.3f}, best of epochs 2-6 {best_later:.3f}")
