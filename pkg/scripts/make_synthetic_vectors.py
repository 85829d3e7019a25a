"""Regenerate the lookup-table embeddings for the bundled synthetic corpus.

Each concept gets a random direction plus a shared "finance" component; synonyms
are small perturbations of their concept's direction. Run from the repo root:

    python scripts/make_synthetic_vectors.py
"""

import json
from pathlib import Path

import numpy as np

DIM = 24
SEED = 20240601
OUT = Path("src/litscape/data/synthetic/vectors.json")

CONCEPTS = {
    "stock price prediction": [],
    "volatility forecasting": [],
    "esg score prediction": [],
    "investor sentiment analysis": [],
    "svm": ["support vector machine"],
    "lstm": [],
    "random forest": [],
    "xgboost": [],
    "bert": [],
    "sp500": ["s&p 500"],
    "yahoo finance": [],
    "stocktwits": [],
    "refinitiv esg ratings": [],
}


def main():
    rng = np.random.default_rng(SEED)
    shared = rng.standard_normal(DIM)
    shared /= np.linalg.norm(shared)
    table = {}
    for head, synonyms in CONCEPTS.items():
        base = rng.standard_normal(DIM)
        base = base / np.linalg.norm(base) + 0.35 * shared
        table[head] = base
        for s in synonyms:
            noise = rng.standard_normal(DIM)
            table[s] = base + 0.12 * noise / np.linalg.norm(noise) * np.linalg.norm(base)
    out = {"model_id": "synthetic-lookup", "dim": DIM,
           "vectors": {k: [round(float(x), 6) for x in v] for k, v in sorted(table.items())}}
    OUT.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
