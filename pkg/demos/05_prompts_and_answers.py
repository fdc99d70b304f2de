"""Build answer-generation prompts in all three styles and parse model replies.

Run: python demos/05_prompts_and_answers.py
"""

from pubrank.dataset import FewshotExample, Question
from pubrank.prompts import PromptSpec, build_prompt, parse_exact_answer, short_answer_hint

TARGET = Question(
    id="demo-f-1",
    body="Which microglial receptor gene carries the Alzheimer risk variant R47H?",
    qtype="factoid",
    gold_snippets=[("104", "R47H is a coding variant of TREM2.")],
    exact_groups=[["TREM2", "triggering receptor expressed on myeloid cells 2"]],
    ideal_answer="The R47H risk variant lies in TREM2.",
)

EXAMPLE_Q = Question(
    id="demo-f-2",
    body="Which apolipoprotein allele raises late-onset Alzheimer risk?",
    qtype="factoid",
    gold_snippets=[("106", "The APOE e4 allele is the strongest common risk factor.")],
    exact_groups=[["APOE e4"]],
    ideal_answer="APOE e4 raises late-onset Alzheimer risk.",
)


def show(title, messages):
    print("=" * 70)
    print(title)
    print("=" * 70)
    for m in messages:
        body = m.content if len(m.content) < 400 else m.content[:400] + "..."
        print(f"--- {m.role} ---\n{body}\n")


def main():
    snippets = [text for _, text in TARGET.gold_snippets]
    fewshot = [
        FewshotExample(
            snippets=[t for _, t in EXAMPLE_Q.gold_snippets],
            body=EXAMPLE_Q.body,
            question=EXAMPLE_Q,
        )
    ]

    style1 = PromptSpec(style=1, n_shots=1, qtype="factoid", answer_kind="exact")
    show("style 1, exact answer, 1-shot", build_prompt(TARGET, snippets, style1, fewshot))

    style2 = PromptSpec(style=2, n_shots=0, qtype="factoid", answer_kind="ideal")
    hint = short_answer_hint(TARGET)
    show(
        "style 2, ideal answer with hint, 0-shot",
        build_prompt(TARGET, snippets, style2, [], answer_hint=hint),
    )

    print("=" * 70)
    print("parsing model replies")
    print("=" * 70)
    print(parse_exact_answer("1. TREM2\n2. APOE\n3. trem2", "factoid"))
    print(parse_exact_answer(" Yes, it does.", "yesno"))
    try:
        parse_exact_answer("Hard to say.", "yesno")
    except Exception as exc:
        print("strict yes/no parse:", type(exc).__name__, "-", exc)


if __name__ == "__main__":
    main()
