"""Prefix-conditioned autoregressive decoder.

The prompt is |M_idx| continuous vectors computed by an MLP from a learned
position row concatenated with (z_y, z_c).  The core is a single-layer GRU
fed the prompt vectors as pseudo-inputs before BOS.  Token representations
are tied to the embedder's table through input/output adapters, so tokens
unseen during training still have consistent embeddings on both sides.
"""

from __future__ import annotations

import numpy as np

from .numeric import Array, Rng, Tensor, concat, log_softmax, stack, take_rows


def init_prefix_params(n_prefix: int, h_pos: int, d_z: int, d_dec: int, hidden: int, rng: Rng) -> dict[str, Array]:
    d_in = h_pos + 2 * d_z
    return {
        "prefix.pos": rng.normal([n_prefix, h_pos]) * 0.5,
        "prefix.w1": rng.normal([d_in, hidden]) / np.sqrt(d_in),
        "prefix.b1": np.zeros(hidden),
        "prefix.w2": rng.normal([hidden, d_dec]) / np.sqrt(hidden),
        "prefix.b2": np.zeros(d_dec),
    }


def init_decoder_params(vocab_size: int, d_emb: int, d_dec: int, rng: Rng) -> dict[str, Array]:
    s_in = 1.0 / np.sqrt(d_emb)
    s_h = 1.0 / np.sqrt(d_dec)
    params = {"dec.w_in": rng.normal([d_emb, d_dec]) * s_in}
    for gate in ("z", "r", "h"):
        params[f"dec.gru_w{gate}"] = rng.normal([d_dec, d_dec]) * s_h
        params[f"dec.gru_u{gate}"] = rng.normal([d_dec, d_dec]) * s_h
        params[f"dec.gru_b{gate}"] = np.zeros(d_dec)
    params["dec.w_out"] = rng.normal([d_dec, d_emb]) * s_h
    params["dec.b_out"] = np.zeros(vocab_size)
    # Per-channel scale on the latent-similarity logit channels. The channel is
    # unconditional on the hidden state: a state-dependent gate would be fit to
    # hidden states of the training labels only and has no defined behavior on
    # a label registered afterwards. The scale starts large so the similarity
    # profile competes with the recurrent logits from the first step; training
    # then balances the two channels.
    for side in ("y", "c"):
        params[f"dec.skip_{side}_scale"] = np.full(1, 16.0)
    return params


def build_prefix(params: dict[str, Tensor], z_y: Tensor, z_c: Tensor) -> Tensor:
    """Prompt matrix, (|M_idx|, d_dec) for single z, (B, |M_idx|, d_dec) batched."""
    z_y = z_y if isinstance(z_y, Tensor) else Tensor(z_y)
    z_c = z_c if isinstance(z_c, Tensor) else Tensor(z_c)
    if z_y.shape[-1] != z_c.shape[-1]:
        raise ValueError("z_y and z_c must share the latent dimension")
    pos = params["prefix.pos"]
    n_prefix = pos.shape[0]
    batched = len(z_y.shape) == 2
    rows = []
    for i in range(n_prefix):
        pos_i = pos[i]
        if batched:
            B = z_y.shape[0]
            ones = Tensor(np.ones((B, 1)))
            pos_i = ones @ pos_i.reshape(1, -1)
            rows.append(concat([pos_i, z_y, z_c], axis=1))
        else:
            rows.append(concat([pos_i, z_y, z_c], axis=0))
    x = stack(rows, axis=1 if batched else 0)
    hidden = (x @ params["prefix.w1"] + params["prefix.b1"]).tanh()
    return hidden @ params["prefix.w2"] + params["prefix.b2"]


class DecoderLM:
    """Single-layer GRU over prompt pseudo-inputs then token embeddings."""

    def __init__(self, params: dict[str, Tensor], table: Tensor, bos_id: int, eos_id: int, max_len: int,
                 skip_y: Tensor | None = None, skip_c: Tensor | None = None):
        self.params = params
        self.table = table
        self.bos_id = bos_id
        self.eos_id = eos_id
        self.max_len = max_len
        # Optional per-sequence logit channels: a similarity profile over the
        # vocabulary derived from each latent, added through a state-dependent
        # gate. Shape (V,) for single sequences, (B, V) batched.
        self.skip_y = skip_y
        self.skip_c = skip_c

    @property
    def vocab_size(self) -> int:
        return self.params["dec.b_out"].shape[0]

    @property
    def d_dec(self) -> int:
        return self.params["dec.w_in"].shape[1]

    def input_vector(self, token_ids) -> Tensor:
        ids = np.asarray(token_ids)
        if (ids < 0).any() or (ids >= self.table.shape[0]).any():
            raise ValueError("token id out of vocabulary")
        return take_rows(self.table, ids) @ self.params["dec.w_in"]

    def init_state(self, batch: int | None = None) -> Tensor:
        if batch is None:
            return Tensor(np.zeros(self.d_dec))
        return Tensor(np.zeros((batch, self.d_dec)))

    def step(self, h: Tensor, x: Tensor) -> Tensor:
        p = self.params
        z = (x @ p["dec.gru_wz"] + h @ p["dec.gru_uz"] + p["dec.gru_bz"]).sigmoid()
        r = (x @ p["dec.gru_wr"] + h @ p["dec.gru_ur"] + p["dec.gru_br"]).sigmoid()
        n = (x @ p["dec.gru_wh"] + (r * h) @ p["dec.gru_uh"] + p["dec.gru_bh"]).tanh()
        return (Tensor(1.0) - z) * h + z * n

    def logits(self, h: Tensor) -> Tensor:
        out = (h @ self.params["dec.w_out"]) @ self.table.T + self.params["dec.b_out"]
        for side, skip in (("y", self.skip_y), ("c", self.skip_c)):
            if skip is None:
                continue
            out = out + self.params[f"dec.skip_{side}_scale"] * skip
        return out

    def consume_prompt(self, prompt: Tensor, batch: int | None = None) -> Tensor:
        h = self.init_state(batch)
        n_prefix = prompt.shape[0] if batch is None else prompt.shape[1]
        for i in range(n_prefix):
            x = prompt[i] if batch is None else prompt[:, i, :]
            h = self.step(h, x)
        return h


def decode_nll(lm: DecoderLM, prompt: Tensor, x: list) -> Tensor:
    """Negative log likelihood of token list x (must end with EOS) under the prompt."""
    if len(x) == 0 or x[-1] != lm.eos_id:
        raise ValueError("x must be non-empty and end with EOS")
    if len(x) > lm.max_len + 1:
        raise ValueError(f"sequence length {len(x)} exceeds max_len={lm.max_len}")
    bad = [t for t in x if not 0 <= int(t) < lm.vocab_size]
    if bad:
        raise ValueError(f"token id {bad[0]} outside vocabulary of size {lm.vocab_size}")
    prompt = prompt if isinstance(prompt, Tensor) else Tensor(prompt)
    h = lm.consume_prompt(prompt)
    h = lm.step(h, lm.input_vector(lm.bos_id))
    nll = Tensor(0.0)
    for t, tok in enumerate(x):
        logp = log_softmax(lm.logits(h))
        nll = nll - logp[int(tok)]
        if t + 1 < len(x):
            h = lm.step(h, lm.input_vector(int(tok)))
    return nll


def decode_nll_batch(lm: DecoderLM, prompts: Tensor, ids: Array, mask: Array) -> Tensor:
    """Per-example token-mean NLL over a padded (B, L) batch; mask marks real steps."""
    B, L = ids.shape
    h = lm.consume_prompt(prompts, batch=B)
    bos = np.full(B, lm.bos_id)
    h = lm.step(h, lm.input_vector(bos))
    step_logps = []
    for t in range(L):
        logp = log_softmax(lm.logits(h))
        step_logps.append(logp[np.arange(B), ids[:, t]])
        if t + 1 < L:
            h = lm.step(h, lm.input_vector(ids[:, t]))
    nll_steps = -stack(step_logps, axis=1)  # (B, L)
    lengths = mask.sum(axis=1)
    return (nll_steps * Tensor(mask)).sum(axis=1) / Tensor(lengths)


def sample_sequence(lm: DecoderLM, prompt: Tensor, max_len: int, strategy: str = "greedy",
                    rng: Rng | None = None, temperature: float = 1.0, top_k: int = 0) -> list:
    """Autoregressive sampling; stops at EOS or max_len. Greedy is rng-independent."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    prompt = prompt if isinstance(prompt, Tensor) else Tensor(prompt)
    h = lm.consume_prompt(prompt)
    h = lm.step(h, lm.input_vector(lm.bos_id))
    out = []
    for _ in range(max_len):
        logits = lm.logits(h).value.copy()
        if strategy == "greedy":
            tok = int(logits.argmax())
        else:
            if rng is None:
                raise ValueError(f"strategy '{strategy}' requires an rng")
            if strategy == "temperature":
                scaled = logits / temperature
            elif strategy == "top_k":
                if top_k < 1:
                    raise ValueError("top_k must be >= 1")
                scaled = logits / temperature
                cutoff = np.partition(scaled, -top_k)[-top_k]
                scaled = np.where(scaled >= cutoff, scaled, -np.inf)
            else:
                raise ValueError(f"unknown strategy '{strategy}'")
            scaled -= scaled.max()
            p = np.exp(scaled)
            p /= p.sum()
            tok = int(np.searchsorted(np.cumsum(p), rng.uniform()))
            tok = min(tok, len(p) - 1)
        if tok == lm.eos_id:
            break
        out.append(tok)
        h = lm.step(h, lm.input_vector(tok))
    return out


def perplexity(lm: DecoderLM, prompt: Tensor, x: list) -> float:
    """exp(NLL / |x|); always >= 1 for a proper model."""
    if len(x) == 0:
        raise ValueError("perplexity requires a non-empty sequence")
    nll = decode_nll(lm, prompt, x)
    return float(np.exp(nll.value / len(x)))
