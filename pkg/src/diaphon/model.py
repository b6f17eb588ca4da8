"""Shared encoder-decoder transducer with per-language embeddings.

Architecture: a per-language embedding (read through one of three
activations) is fused with a one-hot encoding of each input segment by a
bias-free linear layer; the fused sequence feeds a single-layer LSTM
encoder. A single-layer LSTM decoder consumes the previous output symbol
and scores encoder positions through a bilinear form. Alignments are
latent, hard, and monotone; the likelihood marginalizes them exactly with
a forward dynamic program over (output step, input position) states, where
the attention distribution at each step renormalizes the position scores
over the unconsumed suffix. The terminator is emitted from the final
alignment position without a further transition, so a length-m output has
exactly the monotone length-m alignment paths as latent support.

Emission model: log p(v | output step t, input position j) is a linear
head on the concatenation of decoder state t and encoder state j, computed
in factorized form (decoder projection + encoder projection + bias).
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from . import tensor as T
from .corpus import BOS, EOS, PAD, Corpus, Vocabulary
from .tensor import Tensor, no_grad

CHECKPOINT_MAGIC = b"DPHN"
CHECKPOINT_VERSION = 1

NEG_INF = float("-inf")


class CheckpointError(Exception):
    """Base class for checkpoint I/O failures."""


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class EmbeddingMode(str, Enum):
    DENSE = "dense"
    SIGMOID = "sigmoid"
    STRAIGHT_THROUGH = "st"

    @classmethod
    def parse(cls, name: str) -> "EmbeddingMode":
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "dense": cls.DENSE,
            "sigmoid": cls.SIGMOID,
            "st": cls.STRAIGHT_THROUGH,
            "straight_through": cls.STRAIGHT_THROUGH,
        }
        if key not in aliases:
            raise ValueError(f"unknown embedding mode: {name!r}")
        return aliases[key]


@dataclass(frozen=True)
class ModelConfig:
    lang_dim: int = 128
    emb_dim: int = 128
    hidden_dim: int = 256
    mode: EmbeddingMode = EmbeddingMode.DENSE
    max_decode_len: int = 64
    seed: int = 0
    # Two half-width encoder directions concatenated to hidden_dim; without
    # backward context the end-of-input state is invisible to the emission
    # head and stopping fails to generalize to new forms.
    bidirectional_encoder: bool = True

    def __post_init__(self):
        if min(self.lang_dim, self.emb_dim, self.hidden_dim, self.max_decode_len) <= 0:
            raise ValueError("all model dimensions must be positive")

    @property
    def enc_widths(self) -> tuple[int, int]:
        if not self.bidirectional_encoder:
            return self.hidden_dim, 0
        fwd = (self.hidden_dim + 1) // 2
        return fwd, self.hidden_dim - fwd

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["mode"] = EmbeddingMode.parse(d["mode"])
        return cls(**d)


def param_names(config: ModelConfig) -> tuple[str, ...]:
    names = ["lang_table", "fusion", "enc_wx", "enc_wh", "enc_b"]
    if config.bidirectional_encoder:
        names += ["encb_wx", "encb_wh", "encb_b"]
    names += [
        "dec_emb", "dec_wx", "dec_wh", "dec_b",
        "att_w", "out_enc", "out_dec", "out_b",
    ]
    return tuple(names)


class TransducerModel:
    def __init__(self, config: ModelConfig, languages: dict[str, str],
                 input_vocab: Vocabulary, output_vocab: Vocabulary,
                 params: dict[str, Tensor]):
        self.config = config
        self.languages = dict(languages)
        self.input_vocab = input_vocab
        self.output_vocab = output_vocab
        self.params = params
        self._lang_index = {lang: i for i, lang in enumerate(self.languages)}
        self.bos_id = output_vocab.id(BOS)
        self.eos_id = output_vocab.id(EOS)
        self.pad_id = output_vocab.id(PAD)

    # -- construction -------------------------------------------------------

    @classmethod
    def create(cls, config: ModelConfig, corpus: Corpus) -> "TransducerModel":
        rng = T.seeded_rng(("init", config.seed))
        n_lang = len(corpus.languages)
        v_in, v_out = len(corpus.input_vocab), len(corpus.output_vocab)
        dl, de, dh = config.lang_dim, config.emb_dim, config.hidden_dim
        h_fwd, h_bwd = config.enc_widths

        def glorot(shape):
            return T.glorot_init(shape, rng)

        def lstm_bias(width):
            b = Tensor(np.zeros(4 * width), requires_grad=True)
            b.data[width : 2 * width] = 1.0  # open forget gates at init
            return b

        params = {
            "lang_table": glorot((n_lang, dl)),
            "fusion": glorot((v_in + dl, de)),
            "enc_wx": glorot((de, 4 * h_fwd)),
            "enc_wh": glorot((h_fwd, 4 * h_fwd)),
            "enc_b": lstm_bias(h_fwd),
        }
        if config.bidirectional_encoder:
            params["encb_wx"] = glorot((de, 4 * h_bwd))
            params["encb_wh"] = glorot((h_bwd, 4 * h_bwd))
            params["encb_b"] = lstm_bias(h_bwd)
        params.update(
            {
                "dec_emb": glorot((v_out, de)),
                "dec_wx": glorot((de, 4 * dh)),
                "dec_wh": glorot((dh, 4 * dh)),
                "dec_b": lstm_bias(dh),
                "att_w": glorot((dh, dh)),
                "out_enc": glorot((dh, v_out)),
                "out_dec": glorot((dh, v_out)),
                "out_b": Tensor(np.zeros(v_out), requires_grad=True),
            }
        )
        return cls(config, corpus.languages, corpus.input_vocab, corpus.output_vocab, params)

    @property
    def param_names(self) -> tuple[str, ...]:
        return param_names(self.config)

    def parameters(self) -> list[Tensor]:
        return [self.params[name] for name in self.param_names]

    def copy_params_from(self, other: "TransducerModel") -> None:
        for name in self.param_names:
            self.params[name].data[...] = other.params[name].data

    def language_row(self, language: str) -> int:
        try:
            return self._lang_index[language]
        except KeyError:
            raise KeyError(f"unknown language: {language!r}") from None

    # -- embedding reads ----------------------------------------------------

    def _activate(self, raw: Tensor) -> Tensor:
        mode = self.config.mode
        if mode is EmbeddingMode.DENSE:
            return raw
        if mode is EmbeddingMode.SIGMOID:
            return T.sigmoid(raw)
        return T.heaviside_st(raw)

    def read_language_embedding(self, language: str) -> Tensor:
        """Activated embedding row (lang_dim,); grads reach the raw row."""
        row = T.embedding_lookup(self.params["lang_table"], [self.language_row(language)])
        return T.reshape(self._activate(row), (self.config.lang_dim,))

    def language_matrix(self) -> np.ndarray:
        """All activated language embeddings, ordered like the language table."""
        with no_grad():
            return self._activate(self.params["lang_table"]).data.copy()

    # -- shared forward pieces ----------------------------------------------

    def _lstm_step(self, prefix: str, x: Tensor, h: Tensor, c: Tensor):
        wx = self.params[f"{prefix}_wx"]
        gates = x @ wx + h @ self.params[f"{prefix}_wh"] + self.params[f"{prefix}_b"]
        return self._lstm_cell(gates, c)

    @staticmethod
    def _lstm_cell(gates: Tensor, c: Tensor):
        c2 = T.lstm_cell_state(gates, c)
        h2 = T.lstm_cell_output(gates, c2)
        return h2, c2

    def _fused_inputs(self, x_ids: np.ndarray, z: Tensor) -> Tensor:
        """Fusion of one-hot input segments with the language embedding.

        Equivalent to concat(one_hot(x), z) @ fusion with a bias-free layer:
        the one-hot block reduces to a row lookup in the upper part of the
        fusion matrix.
        """
        v_in = len(self.input_vocab)
        upper = T.slice_axis(self.params["fusion"], 0, 0, v_in)
        lower = T.slice_axis(self.params["fusion"], 0, v_in, v_in + self.config.lang_dim)
        z_part = T.reshape(z @ lower, (x_ids.shape[0], 1, self.config.emb_dim))
        return T.embedding_lookup(upper, x_ids) + z_part

    def _run_direction(self, prefix: str, fused: Tensor, width: int) -> Tensor:
        # input projections for all steps at once; the recurrence stays serial
        b, lx, _ = fused.shape
        x_proj = fused @ self.params[f"{prefix}_wx"] + self.params[f"{prefix}_b"]
        wh = self.params[f"{prefix}_wh"]
        h = Tensor(np.zeros((b, width)))
        c = Tensor(np.zeros((b, width)))
        states = []
        for t in range(lx):
            xt = T.reshape(T.slice_axis(x_proj, 1, t, t + 1), (b, 4 * width))
            h, c = self._lstm_cell(xt + h @ wh, c)
            states.append(h)
        return T.stack(states, axis=1)

    def _encode_batch(self, x_ids: np.ndarray, x_len: np.ndarray, z: Tensor) -> Tensor:
        """Encoder states (B, Lx, hidden_dim) for padded inputs; padded
        columns carry garbage and must be masked by the caller.

        With the bidirectional option, each position concatenates a
        left-to-right half-state with a right-to-left half-state computed
        over the length-reversed sequence.
        """
        h_fwd, h_bwd = self.config.enc_widths
        fused = self._fused_inputs(x_ids, z)  # (B, Lx, De)
        enc = self._run_direction("enc", fused, h_fwd)
        if not self.config.bidirectional_encoder:
            return enc
        b, lx = x_ids.shape
        pos = np.arange(lx)[None, :]
        rev_idx = np.where(pos < x_len[:, None], x_len[:, None] - 1 - pos, 0)
        fused_rev = self._fused_inputs(np.take_along_axis(x_ids, rev_idx, axis=1), z)
        bwd_rev = self._run_direction("encb", fused_rev, h_bwd)
        bwd = T.gather_axis1(bwd_rev, rev_idx)  # undo the per-row reversal
        return T.concat([enc, bwd], axis=-1)

    def _decoder_states(self, dec_in: np.ndarray) -> Tensor:
        """Decoder states (B, S, H) from teacher-forced previous symbols."""
        b, steps = dec_in.shape
        dh = self.config.hidden_dim
        emb = T.embedding_lookup(self.params["dec_emb"], dec_in)  # (B, S, De)
        x_proj = emb @ self.params["dec_wx"] + self.params["dec_b"]
        wh = self.params["dec_wh"]
        h = Tensor(np.zeros((b, dh)))
        c = Tensor(np.zeros((b, dh)))
        states = []
        for t in range(steps):
            xt = T.reshape(T.slice_axis(x_proj, 1, t, t + 1), (b, 4 * dh))
            h, c = self._lstm_cell(xt + h @ wh, c)
            states.append(h)
        return T.stack(states, axis=1)

    def _attention_scores(self, enc: Tensor, dec: Tensor, x_len: np.ndarray) -> Tensor:
        """Bilinear scores (B, S, Lx); padded input positions get -inf."""
        enc_w = enc @ T.swap_axes(self.params["att_w"], 0, 1)  # (B, Lx, H)
        scores = dec @ T.swap_axes(enc_w, 1, 2)  # (B, S, Lx)
        lx = scores.shape[-1]
        mask = np.where(np.arange(lx)[None, :] < x_len[:, None], 0.0, NEG_INF)
        return scores + Tensor(mask[:, None, :])

    def _emissions(self, enc: Tensor, dec: Tensor) -> Tensor:
        """Emission log-probs (B, S, Lx, V): log_softmax of the factorized
        linear head over the output vocabulary."""
        b, lx, _ = enc.shape
        s = dec.shape[1]
        v = len(self.output_vocab)
        enc_proj = T.reshape(enc @ self.params["out_enc"], (b, 1, lx, v))
        dec_proj = T.reshape(dec @ self.params["out_dec"], (b, s, 1, v))
        return T.log_softmax(dec_proj + enc_proj + self.params["out_b"])

    # -- likelihood ---------------------------------------------------------

    def _pad_batch(self, items):
        """items: list of (x_ids, y_ids, language). Returns padded arrays."""
        b = len(items)
        x_len = np.array([len(x) for x, _, _ in items], dtype=np.int64)
        y_len = np.array([len(y) for _, y, _ in items], dtype=np.int64)
        if (x_len == 0).any() or (y_len == 0).any():
            raise ValueError("empty input or output sequence in batch")
        lx, ty = int(x_len.max()), int(y_len.max())
        x_ids = np.zeros((b, lx), dtype=np.int64)
        y_ids = np.full((b, ty), self.pad_id, dtype=np.int64)
        lang_rows = np.empty(b, dtype=np.int64)
        for k, (x, y, lang) in enumerate(items):
            x_ids[k, : len(x)] = x
            y_ids[k, : len(y)] = y
            lang_rows[k] = self.language_row(lang)
        return x_ids, x_len, y_ids, y_len, lang_rows

    def log_likelihood_batch(self, items, include_terminator: bool = True):
        """Exact marginal log p(y | x, language) for a batch.

        Returns (per-item log-likelihood Tensor (B,), total emission count).
        The forward DP runs over alignment positions; per output step t the
        transition into position j renormalizes scores over the suffix
        j' >= previous position, and the final terminator emission is folded
        in from the last alignment position.
        """
        x_ids, x_len, y_ids, y_len, lang_rows = self._pad_batch(items)
        b, lx = x_ids.shape
        ty = y_ids.shape[1]

        z = self._activate(T.embedding_lookup(self.params["lang_table"], lang_rows))
        enc = self._encode_batch(x_ids, x_len, z)
        dec_in = np.concatenate(
            [np.full((b, 1), self.bos_id, dtype=np.int64), y_ids], axis=1
        )
        dec = self._decoder_states(dec_in)  # (B, Ty+1, H)
        scores = self._attention_scores(enc, dec, x_len)  # (B, Ty+1, Lx)
        emit = self._emissions(enc, dec)  # (B, Ty+1, Lx, V)

        emit_real = T.take_last(
            T.slice_axis(emit, 1, 0, ty),
            np.broadcast_to(y_ids[:, :, None], (b, ty, lx)),
        )  # (B, Ty, Lx)
        emit_eos = T.take_last(
            emit, np.full((b, ty + 1, lx), self.eos_id, dtype=np.int64)
        )  # (B, Ty+1, Lx)

        valid_j = np.arange(lx)[None, :] < x_len[:, None]  # (B, Lx)

        alpha: Tensor | None = None
        logp = Tensor(np.full(b, NEG_INF))
        for s in range(ty + 1):
            if s >= 1:
                eos_s = T.reshape(T.slice_axis(emit_eos, 1, s, s + 1), (b, lx))
                if include_terminator:
                    cand = T.logsumexp(alpha + eos_s)
                else:
                    cand = T.logsumexp(alpha)
                logp = T.where(y_len == s, cand, logp)
            if s >= ty:
                break
            s_t = T.reshape(T.slice_axis(scores, 1, s, s + 1), (b, lx))
            emit_t = T.reshape(T.slice_axis(emit_real, 1, s, s + 1), (b, lx))
            if s == 0:
                alpha = emit_t + T.log_softmax(s_t)
            else:
                alpha_new = T.monotone_dp_step(alpha, s_t, emit_t, valid_j)
                alpha = T.where((y_len > s)[:, None], alpha_new, alpha)
        tokens = int((y_len + 1).sum()) if include_terminator else int(y_len.sum())
        return logp, tokens

    def sequence_log_likelihood(self, x_ids, y_ids, language: str) -> float:
        """Exact log p(y | x, language), alignments marginalized."""
        x_ids = np.asarray(x_ids, dtype=np.int64)
        y_ids = np.asarray(y_ids, dtype=np.int64)
        if x_ids.size == 0 or y_ids.size == 0:
            raise ValueError("x and y must be non-empty")
        self._check_ids(x_ids, y_ids)
        with no_grad():
            logp, _ = self.log_likelihood_batch([(x_ids, y_ids, language)])
        return float(logp.data[0])

    def _check_ids(self, x_ids, y_ids=None) -> None:
        if x_ids.min() < 0 or x_ids.max() >= len(self.input_vocab):
            raise ValueError("input segment id out of vocabulary range")
        if y_ids is not None and (y_ids.min() < 0 or y_ids.max() >= len(self.output_vocab)):
            raise ValueError("output segment id out of vocabulary range")

    def encode(self, x_ids, language: str) -> np.ndarray:
        """Encoder state matrix (len(x), hidden_dim) for one sequence."""
        x_ids = np.asarray(x_ids, dtype=np.int64)
        if x_ids.size == 0:
            raise ValueError("x must be non-empty")
        self._check_ids(x_ids)
        with no_grad():
            z = self._activate(
                T.embedding_lookup(self.params["lang_table"], [self.language_row(language)])
            )
            enc = self._encode_batch(x_ids[None, :], np.array([x_ids.size]), z)
        return enc.data[0].copy()

    # -- alignment and decoding (numpy, no graphs) --------------------------

    def _forward_tables(self, x_ids: np.ndarray, y_ids: np.ndarray, language: str):
        """Teacher-forced scores/emissions for one pair, as numpy arrays."""
        with no_grad():
            x = x_ids[None, :]
            z = self._activate(
                T.embedding_lookup(self.params["lang_table"], [self.language_row(language)])
            )
            enc = self._encode_batch(x, np.array([x_ids.size]), z)
            dec_in = np.concatenate([[self.bos_id], y_ids])[None, :]
            dec = self._decoder_states(dec_in)
            scores = self._attention_scores(enc, dec, np.array([x_ids.size]))
            emit = self._emissions(enc, dec)
        return scores.data[0], emit.data[0]  # (Ty+1, Lx), (Ty+1, Lx, V)

    def viterbi_alignment(self, x_ids, y_ids, language: str) -> tuple[int, ...]:
        """Max-probability monotone alignment, one input position per output
        symbol (0-based positions). Ties break toward the smaller position.
        """
        x_ids = np.asarray(x_ids, dtype=np.int64)
        y_ids = np.asarray(y_ids, dtype=np.int64)
        if x_ids.size == 0 or y_ids.size == 0:
            raise ValueError("x and y must be non-empty")
        self._check_ids(x_ids, y_ids)
        scores, emit = self._forward_tables(x_ids, y_ids, language)
        lx, m = x_ids.size, y_ids.size
        suffix_lse = np.array(
            [np.logaddexp.reduce(scores[t, i:]) for t in range(m) for i in range(lx)]
        ).reshape(m, lx)
        best = np.empty((m, lx))
        back = np.zeros((m, lx), dtype=np.int64)
        best[0] = emit[0, :, y_ids[0]] + scores[0] - np.logaddexp.reduce(scores[0])
        for t in range(1, m):
            carried = best[t - 1] - suffix_lse[t]  # value of coming from i
            run_val = np.full(lx, NEG_INF)
            run_arg = np.zeros(lx, dtype=np.int64)
            cur, arg = NEG_INF, 0
            for i in range(lx):
                if carried[i] > cur:  # strict: ties keep the smaller index
                    cur, arg = carried[i], i
                run_val[i], run_arg[i] = cur, arg
            best[t] = emit[t, :, y_ids[t]] + scores[t] + run_val
            back[t] = run_arg
        final = best[m - 1] + emit[m, :, self.eos_id]
        j = int(np.argmax(final))
        path = [j]
        for t in range(m - 1, 0, -1):
            j = int(back[t, j])
            path.append(j)
        return tuple(reversed(path))

    def greedy_decode(self, x_ids, language: str | None = None,
                      max_len: int | None = None, z_override=None) -> tuple[str, ...]:
        """Greedy decoding of one input; returns output segment symbols
        (terminator stripped)."""
        out = self.decode_batch([np.asarray(x_ids, dtype=np.int64)],
                                [language] if language is not None else None,
                                max_len=max_len, z_override=z_override)
        return out[0]

    def decode_batch(self, x_seqs, languages=None, max_len: int | None = None,
                     z_override=None) -> list[tuple[str, ...]]:
        """Greedy decode a batch of inputs.

        At each step the predictive distribution marginalizes the alignment:
        transitions advance the forward posterior over positions, emissions
        mix over it, and the argmax symbol is emitted. Emitting the
        terminator stops a sequence; `max_len` caps the output length. The
        padding and begin markers are excluded from the argmax.

        `z_override` replaces every item's activated language embedding with
        the given vector (already in activated space, bypassing the mode
        activation); `languages` may then be None.
        """
        if max_len is None:
            max_len = self.config.max_decode_len
        b = len(x_seqs)
        x_len = np.array([len(x) for x in x_seqs], dtype=np.int64)
        if (x_len == 0).any():
            raise ValueError("empty input sequence")
        lx = int(x_len.max())
        x_ids = np.zeros((b, lx), dtype=np.int64)
        for k, x in enumerate(x_seqs):
            x_ids[k, : len(x)] = np.asarray(x, dtype=np.int64)
            self._check_ids(x_ids[k, : len(x)])

        with no_grad():
            if z_override is not None:
                zv = np.asarray(z_override, dtype=np.float64)
                zv = np.broadcast_to(zv, (b, self.config.lang_dim))
                z = Tensor(zv)
            else:
                if languages is None:
                    raise ValueError("decode needs languages or z_override")
                rows = np.array([self.language_row(l) for l in languages], dtype=np.int64)
                z = self._activate(T.embedding_lookup(self.params["lang_table"], rows))
            enc = self._encode_batch(x_ids, x_len, z)
            enc_w = (enc @ T.swap_axes(self.params["att_w"], 0, 1)).data  # (B,Lx,H)
            enc_proj = (enc @ self.params["out_enc"]).data  # (B,Lx,V)

            dh = self.config.hidden_dim
            h = Tensor(np.zeros((b, dh)))
            c = Tensor(np.zeros((b, dh)))
            pos_mask = np.where(np.arange(lx)[None, :] < x_len[:, None], 0.0, NEG_INF)
            prev = np.full(b, self.bos_id, dtype=np.int64)
            outputs = [[] for _ in range(b)]
            done = np.zeros(b, dtype=bool)
            q = None  # alignment posterior after the emitted prefix

            for step in range(max_len + 1):
                inp = T.embedding_lookup(self.params["dec_emb"], prev)
                h, c = self._lstm_step("dec", inp, h, c)
                s = np.einsum("bh,blh->bl", h.data, enc_w) + pos_mask  # (B, Lx)
                logits = (
                    enc_proj
                    + (h.data @ self.params["out_dec"].data)[:, None, :]
                    + self.params["out_b"].data
                )
                eprob = np.exp(logits - _lse_np(logits)[..., None])  # (B, Lx, V)

                if q is None:
                    r = _softmax_rows(s)
                else:
                    # trans[i, j] = exp(s_j - lse_{j' >= i} s_j') for j >= i
                    suf = np.full((b, lx), NEG_INF)
                    suf[:, lx - 1] = s[:, lx - 1]
                    for i in range(lx - 2, -1, -1):
                        suf[:, i] = np.logaddexp(s[:, i], suf[:, i + 1])
                    trans = np.exp(
                        s[:, None, :] - np.where(np.isfinite(suf), suf, 0.0)[:, :, None]
                    )
                    trans[~np.isfinite(suf)] = 0.0
                    trans *= np.tri(lx, lx, 0).T[None, :, :]  # keep j >= i
                    r = np.einsum("bi,bij->bj", q, trans)

                pred = np.einsum("bl,blv->bv", r, eprob)  # step distribution
                if q is not None:
                    pred[:, self.eos_id] = np.einsum("bl,blv->bv", q, eprob)[:, self.eos_id]
                if step == max_len:
                    break  # length cap: stop without emitting
                pred[:, self.pad_id] = 0.0
                pred[:, self.bos_id] = 0.0
                choice = np.argmax(pred, axis=1)
                choice[done] = self.eos_id
                hit_eos = choice == self.eos_id
                for k in range(b):
                    if not done[k] and not hit_eos[k]:
                        outputs[k].append(int(choice[k]))
                done |= hit_eos
                if done.all():
                    break
                q_new = r * eprob[np.arange(b), :, choice]
                norm = q_new.sum(axis=1, keepdims=True)
                done |= norm[:, 0] <= 0.0  # fully underflowed posterior
                q = np.divide(q_new, norm, out=np.zeros_like(q_new), where=norm > 0)
                prev = choice

        symbols = self.output_vocab.symbols()
        return [tuple(symbols[i] for i in seq) for seq in outputs]


def _lse_np(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=-1)
    return m + np.log(np.exp(x - m[..., None]).sum(axis=-1))


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model: TransducerModel, path) -> None:
    """Versioned binary checkpoint: magic, version, JSON header, float64
    little-endian payload."""
    manifest = []
    offset = 0
    for name in model.param_names:
        p = model.params[name]
        manifest.append({"name": name, "shape": list(p.shape), "offset": offset})
        offset += p.data.size
    header = {
        "config": model.config.to_dict(),
        "languages": model.languages,
        "input_vocab": model.input_vocab.to_dict(),
        "output_vocab": model.output_vocab.to_dict(),
        "manifest": manifest,
    }
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in model.param_names:
            fh.write(model.params[name].data.astype("<f8").tobytes())


def load_model(path) -> TransducerModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise TruncatedCheckpointError(f"{path}: file shorter than the fixed header")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic bytes")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {CHECKPOINT_VERSION}"
        )
    (hlen,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + hlen:
        raise TruncatedCheckpointError(f"{path}: header truncated")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpointError(f"{path}: unreadable header: {e}") from None
    payload = np.frombuffer(raw[16 + hlen :], dtype="<f8")
    params: dict[str, Tensor] = {}
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        lo = entry["offset"]
        if lo + size > payload.size:
            raise TruncatedCheckpointError(f"{path}: payload truncated at {entry['name']}")
        params[entry["name"]] = Tensor(
            payload[lo : lo + size].reshape(shape).copy(), requires_grad=True
        )
    config = ModelConfig.from_dict(header["config"])
    missing = set(param_names(config)) - set(params)
    if missing:
        raise CorruptCheckpointError(f"{path}: missing tensors {sorted(missing)}")
    return TransducerModel(
        config,
        header["languages"],
        Vocabulary.from_dict(header["input_vocab"]),
        Vocabulary.from_dict(header["output_vocab"]),
        params,
    )
