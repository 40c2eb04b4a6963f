"""
ROUGE and an LLM judge
======================

Multi-reference ROUGE takes the best reference by F1. The G-EVAL harness
parses a 1-5 score and sets aside replies it cannot read.
"""

from odmds.llm import ScriptedLLM
from odmds.summ_eval import geval_score, multi_ref_rouge, rouge_l, rouge_n

candidate = "the council paid for the harbor repairs"
references = ["the harbor wall was repaired and the council paid",
              "repairs to the harbor were funded by the council"]

print("R-2 vs each:", [round(rouge_n(candidate, r, 2).f1, 3) for r in references])
print("multi-ref R-2:", round(multi_ref_rouge(candidate, references, "rouge2").f1, 3))
print("R-L:", round(rouge_l(candidate, references[0]).f1, 3))

# a scripted judge: one readable reply, then two it cannot parse
print(geval_score(candidate, references[0], "consistency", ScriptedLLM(["Score: 4"])))
print(geval_score(candidate, references[0], "relevance", ScriptedLLM(["great", "very good"])))
