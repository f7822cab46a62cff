"""Dialogue mining: time windows, reformulation detection, up-sampling, mixing.

Builds dialogues around seed utterances with the shrinking-window rule,
flags user reformulations by text similarity, interleaves reformulation
dialogues at an exact 1:5 ratio, and mixes two sample streams at weights.

Run with:  python demos/03_dialogue_mining.py
"""

import numpy as np

from ohmpipe import (
    MixSpec,
    MixStats,
    Sample,
    build_dialogue,
    detect_reformulations,
    mix_streams,
    text_similarity,
    upsample_reformulations,
)


def utt(uid, t, text):
    return Sample(id=uid, dialogue_id="session-1", turn_index=0, timestamp_s=t,
                  text=text, embedding=np.zeros(4))


# --- 1. time-window construction -----------------------------------------
# A session transcript: the user fights with the lights, then checks the
# weather twenty minutes later. The 90s window chains the first four turns
# together; the weather query is too far away to join.
pool = [
    utt("u1", 0.0, "turn on kitchen lights"),
    utt("u2", 25.0, "turn on the kitchen lights"),
    utt("u3", 70.0, "set brightness to max"),
    utt("u4", 95.0, "thanks"),
    utt("u5", 1300.0, "what's the weather tomorrow"),
]
seed = pool[0]
dialogue = build_dialogue(seed, pool)
print("seed:     ", seed.text)
print("window:   ", dialogue.window_s, "s")
print("contexts: ", [s.text for s in dialogue.past + dialogue.future])

# --- 2. reformulation detection -------------------------------------------
# "turn on the kitchen lights" rephrases the seed: token edit similarity is
# 0.8, over the 0.7 default threshold.
annotated = detect_reformulations(dialogue)
print("\nper-turn similarity to the seed:")
for turn in annotated.future:
    cosine, edit_sim = text_similarity(seed.text, turn.text)
    marker = "<- reformulation" if turn.is_reformulation else ""
    print(f"  cos={cosine:.3f} edit={edit_sim:.3f}  {turn.text!r} {marker}")
print("dialogue flagged:", annotated.has_reformulation)


# --- 3. exact up-sampling --------------------------------------------------
# One reformulation dialogue after every five standard ones, an exact ratio
# rather than a statistical one.
def dialogues(prefix, n):
    return [build_dialogue(utt(f"{prefix}{i}", float(i), f"{prefix} {i}"), [])
            for i in range(n)]


mixed = list(upsample_reformulations(dialogues("std", 25), dialogues("ref", 5), ratio=5))
pattern = "".join("R" if d.seed.id.startswith("ref") else "." for d in mixed)
print(f"\nupsampled stream ({len(mixed)} dialogues): {pattern}")

# --- 4. weighted stream mixing ---------------------------------------------
# Emissions pick a source with probability proportional to its weight.
n = 20_000
spec = MixSpec(
    streams=[
        ((utt(f"a{i}", float(i), "a") for i in range(n)), 20.0),
        ((utt(f"b{i}", float(i), "b") for i in range(n)), 80.0),
    ],
    rng_seed=11,
)
stats = MixStats()
drawn = 0
for _ in mix_streams(spec, stats):
    drawn += 1
    if drawn == n:
        break
print(f"\nmix at weights 20/80 over {n} draws: "
      f"fractions {stats.emitted_per_stream[0] / n:.3f} / {stats.emitted_per_stream[1] / n:.3f}")
