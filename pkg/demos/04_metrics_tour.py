"""Tour of the evaluation metrics with hand-checkable values.

Run: python demos/04_metrics_tour.py
"""

from pubrank.metrics import (
    FactoidGold,
    average_precision_at10,
    list_f1,
    macro_f1_yesno,
    reciprocal_rank,
    rouge_2,
    rouge_su4,
)
from pubrank.runs import RankedRun


def main():
    run = RankedRun("q", [("1", 3.0), ("2", 2.0), ("3", 1.0)])
    print("AP of run [1,2,3] against gold {1,3,99}:", average_precision_at10(run, {"1", "3", "99"}))
    print("  (by hand: (1/1 + 2/3) / min(3,10) = 5/9)")
    print()

    print('maF1 for all-"yes" predictions on a half/half gold:')
    print("  ", macro_f1_yesno(["yes"] * 4, ["yes", "yes", "no", "no"]))
    print("  (F1_yes = 2/3, F1_no = 0, mean = 1/3)")
    print()

    gold = FactoidGold([{"trem2", "triggering receptor expressed on myeloid cells 2"}])
    print("reciprocal rank when the 3rd prediction matches a synonym:")
    print("  ", reciprocal_rank(["apoe", "psen1", "TREM2."], gold))
    print()

    groups = [{"metformin"}, {"insulin"}, {"sulfonylureas"}, {"glp-1 agonists"}]
    print("list F1 with 2 predictions, 1 correct, 4 gold groups:")
    print("  ", list_f1(["metformin", "aspirin"], groups))
    print("  (P = 1/2, R = 1/4, harmonic mean = 1/3)")
    print()

    print('ROUGE-2 of "the cat sat" vs "the cat ate":', rouge_2("the cat sat", "the cat ate"))
    print(
        'ROUGE-SU4 of "insulin lowers glucose" vs itself:',
        rouge_su4("insulin lowers glucose", "insulin lowers glucose"),
    )


if __name__ == "__main__":
    main()
