# Automatic metrics and report tables.
#
# BLEU, CIDEr and ROUGE share one lowercased 13a-style tokenizer.  Reports
# group runs by chart type with corpus-level BLEU/CIDEr per group.

from chartpot import ScoredPair, cider, corpus_bleu, rouge_scores, tokenize

# (1) The shared tokenizer splits punctuation but keeps numbers whole.
print(tokenize("Smartphone ownership rose from 35% in 2011 to 85%."))

pairs = [
    ScoredPair(
        "Smartphone ownership rose from 35% in 2011 to 85% in 2021.",
        ["The share of adults who own smartphones rose from 35% in 2011 to 85% in 2021."],
    ),
    ScoredPair(
        "Coal use declined every year and fell below gas in 2015.",
        ["Coal consumption fell steadily, dropping below natural gas in 2015."],
    ),
    ScoredPair(
        "Most adults favor stricter rules.",
        ["About two-thirds of respondents favor stricter emission rules."],
    ),
]

# (2) Corpus-level scores.
print(f"BLEU  : {corpus_bleu(pairs):.4f}")
print(f"CIDEr : {cider(pairs):.4f}")
for pair in pairs:
    r1, rl = rouge_scores(pair)
    print(f"ROUGE : r1={r1:.3f} rl={rl:.3f}  <- {pair.candidate[:40]}...")

# (3) Sanity identities: a perfect system scores 100 BLEU / 10 CIDEr / 1 ROUGE.
perfect = [ScoredPair(p.references[0], p.references) for p in pairs]
print("perfect BLEU :", corpus_bleu(perfect))
print("perfect CIDEr:", cider(perfect))
