import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from xldistill.data import LabelScheme, Sentence, default_scheme
from xldistill.encoding import PAD_ID, encode_batch
from xldistill.errors import ConfigurationError
from xldistill.model import (
    ChannelTerminal,
    EncoderConfig,
    build_model,
    init_student_from,
    load_checkpoint,
    parameter_hash,
    predict_tags,
    save_checkpoint,
)

SCHEME = default_scheme()


def tiny_config(vocab_size, **kw):
    defaults = dict(
        n_layers=3, hidden_dim=16, n_heads=2, n_frozen=1, vocab_size=vocab_size,
        dropout=0.1, max_positions=32,
    )
    defaults.update(kw)
    return EncoderConfig(**defaults)


@pytest.fixture(scope="module")
def batch(small_vocab):
    sentences = [
        Sentence(("Anna", "visited", "Bergen", "."), ("B-PER", "O", "B-LOC", "O")),
        Sentence(("Cortek", "Corp", "."), ("B-ORG", "I-ORG", "O")),
    ]
    return encode_batch(sentences, small_vocab, SCHEME, 32)


@pytest.fixture(scope="module")
def model(small_vocab):
    return build_model(tiny_config(len(small_vocab)), SCHEME, seed=0)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        EncoderConfig(n_layers=3, n_frozen=3, vocab_size=10)
    with pytest.raises(ConfigurationError):
        EncoderConfig(hidden_dim=10, n_heads=4, vocab_size=10)


def test_active_channels_match_freezing_depth():
    cfg = EncoderConfig(n_layers=12, hidden_dim=64, n_heads=4, n_frozen=3, vocab_size=10)
    assert cfg.active_channels == tuple(range(4, 13))
    assert cfg.aux_channels == tuple(range(4, 12))
    assert cfg.main_channel == 12


def test_encode_deterministic_in_inference_mode(model, batch):
    a = model.encode(batch, train_mode=False)
    b = model.encode(batch, train_mode=False)
    assert torch.equal(a.cls, b.cls)
    for ha, hb in zip(a.hidden, b.hidden):
        assert torch.equal(ha, hb)


def test_encode_returns_all_layers(model, batch):
    outputs = model.encode(batch, train_mode=False)
    assert len(outputs.hidden) == model.config.n_layers
    b, t = batch.subtoken_ids.shape
    for h in outputs.hidden:
        assert h.shape == (b, t, model.config.hidden_dim)
    assert outputs.cls.shape == (b, model.config.hidden_dim)


def test_padding_content_cannot_leak(model, batch):
    outputs = model.encode(batch, train_mode=False)
    perturbed_ids = batch.subtoken_ids.clone()
    pad_positions = batch.attention_mask == 0
    assert bool(pad_positions.any())
    perturbed_ids[pad_positions] = 5  # arbitrary real token id in the pad slots
    import dataclasses

    perturbed = dataclasses.replace(batch, subtoken_ids=perturbed_ids)
    outputs2 = model.encode(perturbed, train_mode=False)
    real = batch.attention_mask.bool()
    for h1, h2 in zip(outputs.hidden, outputs2.hidden):
        assert torch.equal(h1[real], h2[real])


def test_sequence_longer_than_positions_rejected(model, small_vocab):
    long_sentence = Sentence(tuple("abcdefghij" * 4), None)
    overlong = encode_batch([long_sentence], small_vocab, SCHEME, 128)
    with pytest.raises(ConfigurationError):
        model.encode(overlong)


def test_channel_terminal_uniform_when_zeroed():
    terminal = ChannelTerminal(8, 4)
    with torch.no_grad():
        terminal.linear.weight.zero_()
        terminal.linear.bias.zero_()
    probs = terminal(torch.randn(3, 5, 8))
    assert torch.allclose(probs, torch.full((3, 5, 4), 0.25))


def test_channel_terminal_shift_invariance():
    terminal = ChannelTerminal(8, 4)
    hidden = torch.randn(2, 3, 8)
    base = terminal(hidden)
    with torch.no_grad():
        terminal.linear.bias.add_(3.7)  # constant shift on every logit
    assert torch.allclose(base, terminal(hidden), atol=1e-6)


def test_channel_terminal_peaked_bias_value():
    terminal = ChannelTerminal(8, 4)
    with torch.no_grad():
        terminal.linear.weight.zero_()
        terminal.linear.bias.copy_(torch.tensor([10.0, 0.0, 0.0, 0.0]))
    probs = terminal(torch.randn(1, 1, 8))[0, 0]
    denom = math.exp(10.0) + 3.0
    assert probs[0].item() == pytest.approx(math.exp(10.0) / denom, rel=1e-6)
    for k in range(1, 4):
        assert probs[k].item() == pytest.approx(1.0 / denom, rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 10_000))
def test_softmax_rows_normalized(b, t, seed):
    torch.manual_seed(seed)
    terminal = ChannelTerminal(8, SCHEME.n_tags)
    probs = terminal(torch.randn(b, t, 8) * 10)
    sums = probs.sum(dim=-1)
    assert torch.all(probs >= 0)
    assert torch.all((sums - 1.0).abs() <= 1e-6)


def _force_main_channel(model, per_position_probs, batch):
    """Monkeypatch-free: craft terminal weights is fiddly; instead check via argmax path."""


def test_predict_tags_one_hot_recovers_gold(small_vocab, batch):
    cfg = tiny_config(len(small_vocab))
    model = build_model(cfg, SCHEME, seed=1)
    tags = predict_tags(model, batch)
    assert [len(t) for t in tags] == [len(fs) for fs in batch.first_subtoken_index]
    # Now force the main terminal toward a constant tag and check it comes back.
    with torch.no_grad():
        main = model.terminals[str(cfg.main_channel)]
        main.linear.weight.zero_()
        bias = torch.zeros(SCHEME.n_tags)
        bias[SCHEME.tag_to_index["B-LOC"]] = 8.0
        main.linear.bias.copy_(bias)
    tags = predict_tags(model, batch)
    assert all(t == "B-LOC" for sentence in tags for t in sentence)


def test_predict_tags_tie_breaks_to_lowest_index(small_vocab, batch):
    cfg = tiny_config(len(small_vocab))
    model = build_model(cfg, SCHEME, seed=1)
    with torch.no_grad():
        main = model.terminals[str(cfg.main_channel)]
        main.linear.weight.zero_()
        bias = torch.zeros(SCHEME.n_tags)
        bias[1] = 4.0
        bias[3] = 4.0  # exact two-way tie between indices 1 and 3
        main.linear.bias.copy_(bias)
    tags = predict_tags(model, batch)
    assert all(t == SCHEME.index_to_tag(1) for sentence in tags for t in sentence)


def test_predict_tags_invariant_under_logit_rescale(small_vocab, batch):
    cfg = tiny_config(len(small_vocab))
    model = build_model(cfg, SCHEME, seed=3)
    before = predict_tags(model, batch)
    with torch.no_grad():
        main = model.terminals[str(cfg.main_channel)]
        main.linear.weight.mul_(2.5)
        main.linear.bias.mul_(2.5)
    assert predict_tags(model, batch) == before


def test_student_init_from_base(small_vocab):
    cfg = tiny_config(len(small_vocab))
    teacher = build_model(cfg, SCHEME, seed=5)
    base = teacher.encoder_state_dict()
    student = init_student_from(base, cfg, SCHEME, seed=99)
    t_state = teacher.state_dict()
    for name, value in student.state_dict().items():
        if name.startswith("terminals.") or name == "mixture":
            continue
        assert torch.equal(value, t_state[name]), name
    assert torch.equal(student.mixture, torch.ones(len(cfg.aux_channels)))


def test_same_seed_same_init(small_vocab):
    cfg = tiny_config(len(small_vocab))
    a = build_model(cfg, SCHEME, seed=7)
    b = build_model(cfg, SCHEME, seed=7)
    assert parameter_hash(a) == parameter_hash(b)
    c = build_model(cfg, SCHEME, seed=8)
    assert parameter_hash(a) != parameter_hash(c)


def test_frozen_parameters_survive_optimizer_steps(small_vocab, batch):
    from xldistill.losses import LossConfig, teacher_loss
    from xldistill.training import make_optimizer

    cfg = tiny_config(len(small_vocab))
    model = build_model(cfg, SCHEME, seed=11)
    frozen_before = parameter_hash(model, only_frozen=True)
    optimizer, scheduler = make_optimizer(model, 1e-2, 10, 0.1, 0.01)
    for _ in range(5):
        outputs = model.encode(batch, train_mode=True)
        probs = model.channel_probs(outputs)
        loss, _ = teacher_loss(
            probs, batch.label_ids, model.mixture_weights(), LossConfig(),
            cfg.main_channel, cfg.aux_channels,
        )
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        scheduler.step()
    assert parameter_hash(model, only_frozen=True) == frozen_before
    assert parameter_hash(model) != frozen_before  # trainables did move


def test_terminals_exist_exactly_on_active_channels(model):
    assert set(model.terminals.keys()) == {str(m) for m in model.config.active_channels}
    assert model.mixture.shape == (len(model.config.aux_channels),)


def test_checkpoint_round_trip(tmp_path, small_vocab, batch):
    cfg = tiny_config(len(small_vocab))
    model = build_model(cfg, SCHEME, seed=13)
    base = model.encoder_state_dict()
    save_checkpoint(tmp_path / "ckpt", model, small_vocab, meta={"role": "teacher"},
                    base_encoder_state=base)
    loaded = load_checkpoint(tmp_path / "ckpt")
    assert parameter_hash(loaded.model) == parameter_hash(model)
    assert loaded.config == cfg
    assert loaded.scheme == SCHEME
    assert loaded.meta["role"] == "teacher"
    assert predict_tags(loaded.model, batch) == predict_tags(model, batch)
    restored_base = loaded.base_encoder_state()
    assert set(restored_base) == set(base)
    assert all(torch.equal(restored_base[k], base[k]) for k in base)


def test_checkpoint_missing_dir(tmp_path):
    with pytest.raises(ConfigurationError):
        load_checkpoint(tmp_path / "nope")
