"""Freeze golden metric values for the 20-pair corpus.

Run from the repository root:  python tests/oracles/make_goldens.py
Rewrites tests/data/golden_metrics.json from the oracle implementations.
"""

import json
from pathlib import Path

from metric_oracles import (
    oracle_bleu,
    oracle_cider,
    oracle_rouge1,
    oracle_rouge_l,
    oracle_tokenize,
)

# 20 chart-summary-like pairs with varied overlap, numbers and punctuation.
GOLDEN_CORPUS = [
    ("The share of adults who own smartphones rose from 35% in 2011 to 85% in 2021.",
     "Smartphone ownership among adults rose from 35% in 2011 to 85% in 2021."),
    ("Republicans lead Democrats 45 to 38 on economic confidence.",
     "On economic confidence, Republicans lead Democrats by 45 to 38."),
    ("Coal consumption fell steadily, dropping below natural gas in 2015.",
     "Coal use declined every year and fell below natural gas around 2015."),
    ("Most respondents, about two-thirds, favor stricter emission rules.",
     "Roughly two-thirds of respondents support stricter rules on emissions."),
    ("The median age at first marriage climbed to 30.4 years for men.",
     "Men now first marry at a median age of 30.4 years."),
    ("Online news consumption overtook print newspapers in 2013.",
     "Print newspapers were overtaken by online news in 2013."),
    ("Wind capacity grew fastest in Texas, adding 4,200 megawatts.",
     "Texas added the most wind capacity with 4,200 megawatts."),
    ("Support for the measure is flat at about 52% across all age groups.",
     "About 52% support the measure, a share flat across age groups."),
    ("The unemployment rate peaked at 14.7% in April 2020 before falling.",
     "Unemployment hit its 14.7% peak in April 2020 and then declined."),
    ("Average commute times increased in 8 of the 10 largest metros.",
     "Commutes got longer in eight of the ten biggest metro areas."),
    ("Sales of electric vehicles doubled, reaching 1.2 million units.",
     "Electric vehicle sales doubled to 1.2 million units."),
    ("Opinions split sharply by party: 78% of Democrats versus 22% of Republicans.",
     "Views divide on party lines, 78% of Democrats against 22% of Republicans."),
    ("The survey finds 61% of teens use video chat daily.",
     "Daily video chat is reported by 61% of teens in the survey."),
    ("Housing costs consumed over half of income for the bottom quintile.",
     "For the lowest quintile, more than half of income went to housing."),
    ("Global temperatures in 2023 were 1.18 degrees above the 20th-century average.",
     "In 2023 the global temperature ran 1.18 degrees over the 20th-century mean."),
    ("Attendance recovered to 94% of pre-pandemic levels by spring.",
     "By spring, attendance was back to 94% of its pre-pandemic level."),
    ("Small businesses created the majority of new jobs last quarter.",
     "The majority of new jobs last quarter came from small businesses."),
    ("Confidence in institutions dropped to a record low of 27%.",
     "Institutional confidence fell to 27%, a record low."),
    ("The gender pay gap narrowed slightly to 82 cents on the dollar.",
     "Women now earn 82 cents per dollar, a slightly narrower gap."),
    ("Broadband adoption stalled in rural counties at roughly 72%.",
     "Rural counties plateaued near 72% broadband adoption."),
]


def main():
    candidates = [c for c, _ in GOLDEN_CORPUS]
    references = [[r] for _, r in GOLDEN_CORPUS]
    goldens = {
        "corpus": GOLDEN_CORPUS,
        "bleu": oracle_bleu(candidates, references),
        "cider": oracle_cider(candidates, references),
        "rouge1": [oracle_rouge1(c, r) for c, r in zip(candidates, references)],
        "rougeL": [oracle_rouge_l(c, r) for c, r in zip(candidates, references)],
        "tokenize_examples": {
            "Hello, world!": oracle_tokenize("Hello, world!"),
            "The rate hit 14.7% in April-2020.": oracle_tokenize(
                "The rate hit 14.7% in April-2020."
            ),
        },
    }
    out = Path(__file__).resolve().parent.parent / "data" / "golden_metrics.json"
    out.write_text(json.dumps(goldens, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}")
    print(f"bleu={goldens['bleu']:.6f} cider={goldens['cider']:.6f}")


if __name__ == "__main__":
    main()
