"""ASR scoring: alignment, WER/WERR, SER, domain normalization, error types.

Scores a toy hypothesis set against references, shows the alignment trace
behind the counts, then compares two systems both by-utterance (micro) and
with every domain weighted equally (macro).

Run with:  python demos/04_scoring_asr.py
"""

from ohmpipe import align, domain_normalized, error_type_rates, score_pairs, werr

# --- 1. a single alignment -------------------------------------------------
counts, steps = align("turn on the kitchen lights", "turn on a kitchen light please")
print("ref: turn on the kitchen lights")
print("hyp: turn on a kitchen light please")
print("ops:", " ".join(f"{s.op}({s.ref or ''}|{s.hyp or ''})" for s in steps))
print(f"S={counts.substitutions} I={counts.insertions} D={counts.deletions} "
      f"N={counts.ref_len} -> WER {counts.total / counts.ref_len:.3f}\n")

# --- 2. scoring a system ---------------------------------------------------
refs_and_hyps = [
    ("play jazz", "play jazz"),
    ("set a timer for ten minutes", "set a timer for ten minutes"),
    ("call mom", "call tom"),
    ("add milk to the shopping list", "add milk to the shopping list"),
    ("what's the weather", "what's the weather like"),
]
report = score_pairs(refs_and_hyps)
print(f"system WER {report.wer:.3f}, SER {report.ser:.3f} over {report.utterances} utterances")

# --- 3. micro vs macro comparison -------------------------------------------
# The shopping domain is tiny but improves a lot; by-utterance weighting
# hides it, equal-domain weighting surfaces it.
base = {
    "music": [("play jazz", "play jass")] * 9 + [("play rock", "play rock")],
    "shopping": [("add milk to the list", "add silk to the list")] * 2,
}
new = {
    "music": [("play jazz", "play jass")] * 9 + [("play rock", "play rock")],
    "shopping": [("add milk to the list", "add milk to the list")] * 2,
}
comparison = domain_normalized(base, new)
print("\nper-domain improvement:")
for domain, row in comparison.per_domain.items():
    print(f"  {domain:<10} WER {row['base_wer']:.3f} -> {row['new_wer']:.3f} "
          f"(WERR {row['werr']:.1f}%)")
print(f"macro WERR {comparison.werr_macro:.1f}%  vs  micro WERR {comparison.werr_micro:.1f}%")

# --- 4. error-type decomposition --------------------------------------------
base_counts = score_pairs([(r, h) for pairs in base.values() for r, h in pairs]).counts
new_counts = score_pairs([(r, h) for pairs in new.values() for r, h in pairs]).counts
rates = error_type_rates(base_counts, new_counts)
print(f"\nrelative reduction per error type: "
      f"SUBR={rates.subr and round(rates.subr, 1)} "
      f"INSR={rates.insr} DELR={rates.delr} (None = undefined, no such baseline errors)")

# --- 5. relative improvement arithmetic ---------------------------------------
print(f"\nwerr(11.90, 8.99) = {werr(11.90, 8.99):.2f}%")
