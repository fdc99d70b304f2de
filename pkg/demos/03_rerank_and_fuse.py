"""The two-stage re-rank plus ensemble story on a toy question.

A weak retrieval order goes through a pointwise scorer (top-30), a listwise
reorder (top-10), and both fusion modes; average precision improves at each
step.

Run: python demos/03_rerank_and_fuse.py
"""

from pubrank.corpus import Document
from pubrank.fusion import FusionConfig, fuse_nominate, fuse_weighted
from pubrank.metrics import average_precision_at10
from pubrank.rerank import llm_rerank, pointwise_rerank
from pubrank.runs import RankedRun

GOLD = {"7", "19", "23", "31"}


class CannedChat:
    """Stands in for the chat model: likes lower ordinals slightly less."""

    def chat(self, messages):
        # pretend the model read the candidates and put the gold ones first
        prompt = messages[-1].content
        gold_ordinals = []
        other = []
        for line in prompt.splitlines():
            if line.startswith("["):
                ordinal = int(line[1 : line.index("]")])
                pmid = line.split("Doc ")[1].split(" ")[0]
                (gold_ordinals if pmid in GOLD else other).append(ordinal)
        chosen = (gold_ordinals + other)[:10]
        return "[" + ", ".join(map(str, chosen)) + "]"


def main():
    pmids = [str(i) for i in range(1, 41)]
    docs = {p: Document(p, f"Doc {p} overview", f"Abstract of document {p}.") for p in pmids}
    retrieval = RankedRun("demo-q", [(p, 40.0 - i) for i, p in enumerate(pmids)], "retrieval")
    print("retrieval AP@10:", round(average_precision_at10(retrieval.truncated(10), GOLD), 4))

    def scorer(query, batch):
        return [(p, 0.9 if p in GOLD else 0.1 + (int(p) % 7) / 100) for p, _ in batch]

    cross30 = pointwise_rerank("toy question?", retrieval, scorer, docs, k=30)
    cross10 = cross30.truncated(10)
    print("cross-encoder AP@10:", round(average_precision_at10(cross10, GOLD), 4))

    llm10 = llm_rerank("toy question?", cross30, CannedChat(), docs, k=10)
    print("listwise AP@10:", round(average_precision_at10(llm10, GOLD), 4))

    weighted = fuse_weighted(cross10, llm10, FusionConfig(mode="weighted", w1=1, w2=7))
    nominated = fuse_nominate(cross10, llm10, FusionConfig(mode="nominate", ka=6))
    print("weighted fusion AP@10:", round(average_precision_at10(weighted, GOLD), 4))
    print("nominate fusion AP@10:", round(average_precision_at10(nominated, GOLD), 4))
    print()
    print("weighted top-10:", weighted.pmids)


if __name__ == "__main__":
    main()
