"""Synthetic aligned corpus in the manifest layout, built from tone and noise primitives.

Each phone is rendered as a two-formant tone with a phone-specific noise share.
Speakers differ by a random pitch scale that is independent of gender, so
gender can only be learned from the metadata. With ``gender_shift`` on,
female speakers' transcriptions use ``ah`` wherever the lexicon has ``a``,
while the audio stays the same.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .embeddings import save_vec_text
from .frontend import SAMPLE_RATE, write_wav

LEXICON = {
    "kata": "k a t a", "mono": "m o n o", "sili": "s i l i", "tupa": "t u p a",
    "neko": "n e k o", "rami": "r a m i", "dobu": "d o b u", "gesa": "g e s a",
    "lupo": "l u p o", "bika": "b i k a", "sora": "s o r a", "mate": "m a t e",
    "pinu": "p i n u", "kedo": "k e d o", "tali": "t a l i", "nubo": "n u b o",
    "rego": "r e g o", "dima": "d i m a", "sapu": "s a p u", "boke": "b o k e",
}

# (formant 1 Hz, formant 2 Hz, noise share)
PHONE_SOUNDS = {
    "a": (750, 1250, 0.0), "e": (450, 2100, 0.0), "i": (300, 2600, 0.0),
    "o": (500, 900, 0.0), "u": (320, 750, 0.0),
    "k": (1800, 3000, 0.6), "t": (2600, 4200, 0.6), "p": (900, 1600, 0.6),
    "d": (2200, 3600, 0.35), "g": (1500, 2600, 0.35), "b": (600, 1300, 0.35),
    "s": (4500, 6500, 0.9), "m": (250, 1100, 0.1), "n": (280, 1700, 0.1),
    "l": (380, 1500, 0.05), "r": (420, 1350, 0.05),
}
FEMALE_SUBSTITUTION = {"a": "ah"}
WORDS_PER_UTTERANCE = (3, 6)
UTTERANCES_PER_SPEAKER = 5


def word_phones(word: str, gender: str, gender_shift: bool) -> list[str]:
    phones = LEXICON[word].split()
    if gender_shift and gender == "F":
        phones = [FEMALE_SUBSTITUTION.get(p, p) for p in phones]
    return phones


def _render_phone(phone: str, scale: float, rng: np.random.Generator) -> np.ndarray:
    f1, f2, noise_share = PHONE_SOUNDS[phone]
    is_vowel = noise_share == 0.0
    dur = rng.uniform(0.05, 0.08) if is_vowel else rng.uniform(0.03, 0.05)
    count = int(dur * SAMPLE_RATE)
    t = np.arange(count) / SAMPLE_RATE
    tone = np.sin(2 * np.pi * f1 * scale * t) + 0.6 * np.sin(2 * np.pi * f2 * scale * t)
    noise = rng.standard_normal(count)
    sig = (1 - noise_share) * tone + noise_share * noise
    ramp = np.minimum(1.0, np.minimum(np.arange(count), np.arange(count)[::-1]) / (0.005 * SAMPLE_RATE))
    return sig * ramp


def _gap(rng) -> np.ndarray:
    return 0.003 * rng.standard_normal(int(rng.uniform(0.02, 0.06) * SAMPLE_RATE))


def generate(out, utterances: int, seed: int = 0, gender_shift: bool = False, dim: int = 50,
             words_per_utterance: tuple[int, int] | list[int] | None = None) -> Path:
    """Write manifest, wavs, alignments, ``split.tsv`` and ``embeddings.vec`` under ``out``.

    ``words_per_utterance`` may be a (lo, hi) range or an explicit per-utterance list.
    """
    out = Path(out)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, 2])
    words = sorted(LEXICON)
    n_speakers = max(1, -(-utterances // UTTERANCES_PER_SPEAKER))
    speakers = []
    for s in range(n_speakers):
        speakers.append({
            "id": f"spk{s:03d}",
            "gender": "M" if s % 2 == 0 else "F",
            "dialect": int(rng.integers(1, 9)),
            "scale": float(rng.uniform(0.92, 1.08)),
        })

    manifest = ["utterance_id\twav_path\tspeaker_id\tgender\tdialect"]
    for u in range(utterances):
        spk = speakers[u // UTTERANCES_PER_SPEAKER]
        utt_id = f"utt{u:04d}"
        if isinstance(words_per_utterance, list):
            count = words_per_utterance[u]
        else:
            lo, hi = words_per_utterance or WORDS_PER_UTTERANCE
            count = int(rng.integers(lo, hi + 1))
        chosen = [words[i] for i in rng.integers(0, len(words), size=count)]
        pieces = [_gap(rng)]
        cursor = pieces[0].size
        word_lines, phone_lines = [], []
        for j, word in enumerate(chosen):
            phones = word_phones(word, spk["gender"], gender_shift)
            audio = np.concatenate([_render_phone(p, spk["scale"], rng) for p in LEXICON[word].split()])
            audio = 0.3 * audio + 0.003 * rng.standard_normal(audio.size)
            word_lines.append(f"{word} {cursor} {cursor + audio.size}")
            phone_lines.append(f"{j} {' '.join(phones)}")
            gap = _gap(rng)
            pieces += [audio, gap]
            cursor += audio.size + gap.size
        signal = np.clip(np.concatenate(pieces), -1.0, 1.0)
        write_wav(out / "wav" / f"{utt_id}.wav", np.round(signal * 32767).astype(np.int16))
        (out / f"{utt_id}.words").write_text("\n".join(word_lines) + "\n", encoding="utf-8")
        (out / f"{utt_id}.phones").write_text("\n".join(phone_lines) + "\n", encoding="utf-8")
        manifest.append(f"{utt_id}\twav/{utt_id}.wav\t{spk['id']}\t{spk['gender']}\t{spk['dialect']}")
    (out / "manifest.tsv").write_text("\n".join(manifest) + "\n", encoding="utf-8")

    # speakers 3 and 4 of every ten (one M, one F) form the test split
    split = [f"{'test' if s % 10 in (3, 4) else 'train'}\t{spk['id']}" for s, spk in enumerate(speakers)]
    (out / "split.tsv").write_text("\n".join(split) + "\n", encoding="utf-8")

    emb_rng = np.random.default_rng([seed, 3])
    vectors = {w: emb_rng.standard_normal(dim).astype(np.float32) / np.sqrt(dim) for w in words}
    save_vec_text(vectors, out / "embeddings.vec", dim)
    return out
