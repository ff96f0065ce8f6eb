"""Regenerate the bundled replay corpus in ``fixtures/``.

Ten hand-written questions with scripted model and retrieval responses.  The
scenarios cover agreement, symbolic override of an unsupported neural answer,
deference to the neural path on thin evidence, retries, malformed and prose
responses, retrieval failure and short or long document pools.

    python3 scripts/build_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures"
YNM = ["yes", "no", "maybe"]


def picos(population=None, intervention=None, comparison=None, outcome=None, study_design=None) -> dict:
    return {
        "population": population,
        "intervention": intervention,
        "comparison": comparison,
        "outcome": outcome,
        "study_design": study_design,
    }


def analysis(core, aux=(), mode="FOREGROUND_PICOS", p=None, concepts=()) -> dict:
    return {
        "mode": mode,
        "picos": p if mode == "FOREGROUND_PICOS" else None,
        "concepts": list(concepts),
        "core_keywords": list(core),
        "aux_keywords": list(aux),
    }


def doc(i, title, text) -> dict:
    return {"id": f"PMID{i}", "title": title, "text": text}


def structured(snippet, p=None, concepts=()) -> dict:
    return {"picos": p or picos(), "core_concepts": list(concepts), "snippet": snippet}


def ann(quality, relevance, support, hypothesis) -> dict:
    return {"quality": quality, "relevance": relevance, "support": support, "hypothesis": hypothesis}


def neural(answer, rationale, confidence) -> dict:
    return {"answer": answer, "rationale": rationale, "confidence": confidence}


# Each question: record, analysis responses, documents, structure responses,
# annotation responses, support-only responses, neural responses, arbitration responses.
# A list value scripts successive attempts; {"error": ...} fails that attempt.
QUESTIONS: list[dict] = [
    {
        "record": {
            "id": "q01",
            "question": "Does aspirin reduce the risk of recurrent stroke in adults after a transient ischemic attack?",
            "options": YNM,
            "gold": "yes",
        },
        "analyze": analysis(["aspirin", "transient ischemic attack"], ["stroke", "recurrence"],
                            p=picos("adults after TIA", "aspirin", "placebo", "recurrent stroke", "RCT")),
        "docs": [
            doc(1001, "Aspirin after TIA: a meta-analysis",
                "Pooled analysis of 12 randomized trials: aspirin lowered early recurrent stroke risk after TIA (RR 0.66)."),
            doc(1002, "Early aspirin in minor stroke",
                "In a randomized trial of 3,000 patients, early aspirin reduced 90-day stroke recurrence."),
            doc(1003, "Antiplatelet use in a TIA registry",
                "A registry cohort found lower recurrence among patients discharged on aspirin."),
        ],
        "structure": [
            structured("Aspirin lowered early recurrent stroke risk after TIA (RR 0.66).",
                       picos("adults after TIA", "aspirin", "no aspirin", "recurrent stroke", "meta-analysis"),
                       ["aspirin", "TIA", "stroke recurrence"]),
            structured("Early aspirin reduced 90-day stroke recurrence.",
                       picos("minor stroke or TIA", "early aspirin", "placebo", "90-day recurrence", "RCT"),
                       ["aspirin", "stroke"]),
            structured("Lower recurrence among patients discharged on aspirin.",
                       picos("TIA registry", "aspirin", None, "recurrence", "cohort"), ["aspirin"]),
        ],
        "annotate": [
            ann("SYSTEMATIC_REVIEW_META", "HIGH", "STRONG", "yes"),
            ann("RCT", "HIGH", "STRONG", "yes"),
            ann("COHORT", "MEDIUM", "MODERATE", "yes"),
        ],
        "annotate_support": ["yes", "yes", "yes"],
        "neural": neural("yes", "Trials and a meta-analysis show aspirin lowers recurrence, so the answer is yes.", 0.9),
        "arbitrate": {"answer": "yes", "reliability_status": "HIGH", "dominant_path": "AGREEMENT",
                      "rationale": "Both paths agree on yes with strong evidence."},
    },
    {
        # symbolic path is decisive; neural answer is not backed by its own rationale
        "record": {
            "id": "q02",
            "question": "A 45-year-old with a seizure disorder seeks help quitting smoking. Which is the most appropriate next step?",
            "options": {"A": "Avoid bupropion", "B": "Prescribe bupropion", "C": "High-dose nicotine gum only", "D": "No intervention"},
            "gold": "A",
        },
        "analyze": analysis(["bupropion", "seizure"], ["smoking cessation", "contraindication"],
                            p=picos("smokers with seizure disorder", "bupropion", "other cessation aids", "seizure risk", None)),
        "docs": [
            doc(2001, "Bupropion and seizure threshold",
                "Bupropion lowers the seizure threshold and is contraindicated in patients with seizure disorders."),
            doc(2002, "Prescribing information review",
                "Labeling lists seizure disorder as a contraindication for bupropion."),
        ],
        "structure": [
            structured("Bupropion is contraindicated in patients with seizure disorders.",
                       picos("patients with seizure disorders", "bupropion", None, "seizures", "systematic review"),
                       ["bupropion", "seizure threshold"]),
            structured("Seizure disorder is a contraindication for bupropion.", None, ["bupropion", "contraindication"]),
        ],
        "annotate": [
            ann("RCT", "HIGH", "STRONG", "A"),
            ann("UNCLEAR_BASIC", "LOW", "WEAK", "A"),
        ],
        "annotate_support": ["A", "A"],
        "neural": neural("B", "Bupropion lowers the seizure threshold, so it should be avoided in this patient.", 0.7),
        "arbitrate": {"answer": "A", "reliability_status": "MODERATE", "dominant_path": "SYMBOLIC",
                      "rationale": "The neural rationale argues for avoiding bupropion, contradicting its answer."},
    },
    {
        # thin evidence leaves the symbolic path abstaining; a grounded neural answer wins
        "record": {
            "id": "q03",
            "question": "Is serum procalcitonin useful for guiding antibiotic discontinuation in ventilated ICU patients?",
            "options": YNM,
            "gold": "yes",
        },
        "analyze": analysis(["procalcitonin", "antibiotic"], ["intensive care", "ventilation"],
                            p=picos("ventilated ICU patients", "procalcitonin-guided stopping", "standard care", "antibiotic days", None)),
        "docs": [
            doc(3001, "Procalcitonin kinetics in sepsis",
                "Procalcitonin fell faster in patients who responded to therapy."),
            doc(3002, "Biomarkers in pneumonia",
                "Several biomarkers, including procalcitonin, were measured in pneumonia patients."),
        ],
        "structure": [
            structured("Procalcitonin fell faster in treatment responders.", None, ["procalcitonin", "sepsis"]),
            structured("Procalcitonin was measured among several pneumonia biomarkers.", None, ["biomarkers"]),
        ],
        "annotate": [
            ann("COHORT", "MEDIUM", "MODERATE", "yes"),
            ann("CASE_REPORT", "LOW", "WEAK", "maybe"),
        ],
        "annotate_support": ["yes", "maybe"],
        "neural": neural("yes", "Trials of procalcitonin-guided stopping shortened antibiotic courses safely, so yes.", 0.8),
        "arbitrate": "I would go with yes because the neural path is grounded.",
    },
    {
        # seven documents, exercises truncation to k
        "record": {
            "id": "q04",
            "question": "Do statins reduce major cardiovascular events in adults with diabetes?",
            "options": YNM,
            "gold": "yes",
        },
        "analyze": analysis(["statin", "diabetes"], ["cardiovascular events", "LDL"],
                            p=picos("adults with diabetes", "statin", "placebo", "major cardiovascular events", "RCT")),
        "docs": [
            doc(4000 + i, f"Statin study {i}", text)
            for i, text in enumerate([
                "Statin therapy cut major vascular events by one fifth per mmol/L LDL reduction in diabetes.",
                "Atorvastatin reduced first cardiovascular events in type 2 diabetes.",
                "Statin users with diabetes had fewer myocardial infarctions in a cohort.",
                "A case series reported myalgia on statins.",
                "Statin effects on glycemic control were small.",
                "Long-term follow-up confirmed fewer cardiovascular deaths with statins.",
                "Editorial discussing statin adherence.",
            ], start=1)
        ],
        "structure": [
            structured("Statin therapy cut major vascular events by one fifth per mmol/L LDL reduction.",
                       picos("diabetes", "statin", "control", "major vascular events", "meta-analysis"), ["statin"]),
            structured("Atorvastatin reduced first cardiovascular events.",
                       picos("type 2 diabetes", "atorvastatin", "placebo", "cardiovascular events", "RCT"), ["atorvastatin"]),
            structured("Fewer myocardial infarctions among statin users.", None, ["statin", "myocardial infarction"]),
            structured("Myalgia reported on statins.", None, ["myalgia"]),
            structured("Statin effects on glycemic control were small.", None, ["glycemic control"]),
            structured("Fewer cardiovascular deaths with statins at long-term follow-up.", None, ["statin"]),
            structured("Editorial on adherence.", None, ["adherence"]),
        ],
        "annotate": [
            ann("SYSTEMATIC_REVIEW_META", "HIGH", "STRONG", "yes"),
            ann("RCT", "HIGH", "STRONG", "yes"),
            ann("COHORT", "MEDIUM", "MODERATE", "yes"),
            ann("CASE_REPORT", "LOW", "WEAK", "no"),
            ann("COHORT", "LOW", "NONE", "NONE"),
            ann("COHORT", "HIGH", "STRONG", "yes"),
            ann("UNCLEAR_BASIC", "IRRELEVANT", "NONE", "NONE"),
        ],
        "annotate_support": ["yes", "yes", "yes", "no", "NONE", "yes", "NONE"],
        "neural": neural("yes", "Large trials show statins prevent cardiovascular events in diabetes; yes.", 0.95),
    },
    {
        # retries: prose analysis then JSON; malformed annotation labels are sanitized
        "record": {
            "id": "q05",
            "question": "Does vitamin D supplementation prevent fractures in community-dwelling older adults?",
            "options": YNM,
            "gold": "no",
        },
        "analyze": [
            "Sure! This is a foreground question about vitamin D and fractures.",
            analysis(["vitamin D", "fracture"], ["older adults", "supplementation"],
                     p=picos("community-dwelling older adults", "vitamin D", "placebo", "fractures", "RCT")),
        ],
        "docs": [
            doc(5001, "Vitamin D and fractures: meta-analysis",
                "Vitamin D alone did not reduce hip or total fractures in community-dwelling adults."),
            doc(5002, "Large vitamin D trial",
                "Supplementation did not lower fracture incidence compared with placebo."),
            doc(5003, "Observational vitamin D cohort",
                "Higher serum vitamin D was associated with fewer fractures."),
        ],
        "structure": [
            structured("Vitamin D alone did not reduce hip or total fractures.",
                       picos("community-dwelling adults", "vitamin D", "placebo", "fractures", "meta-analysis"), ["vitamin D"]),
            [{"error": "timeout"}, structured("Supplementation did not lower fracture incidence.",
                                              picos("older adults", "vitamin D", "placebo", "fractures", "RCT"), ["vitamin D"])],
            structured("Higher serum vitamin D was associated with fewer fractures.", None, ["vitamin D"]),
        ],
        "annotate": [
            ann("RCTT", "HIGH", "STRONG", "no"),
            ann("RCT", "HIGH", "STRONG", "no"),
            ann("COHORT", "MEDIUM", "WEAK", "yes"),
        ],
        "annotate_support": ["no", "no", "yes"],
        "neural": neural("no", "Randomized evidence shows no fracture benefit, so no.", 0.75),
    },
    {
        # neural path answers in prose
        "record": {
            "id": "q06",
            "question": "Is long-term acid suppression associated with an increased risk of dementia?",
            "options": YNM,
            "gold": "maybe",
        },
        "analyze": analysis(["proton pump inhibitor", "dementia"], ["acid suppression", "cognitive decline"],
                            p=picos("older adults", "proton pump inhibitors", "non-users", "dementia", "cohort")),
        "docs": [
            doc(6001, "PPI use and dementia in a claims cohort",
                "Regular PPI use was associated with a higher dementia incidence."),
            doc(6002, "Prospective cohort on PPIs and cognition",
                "No association between PPI use and dementia after adjustment."),
            doc(6003, "Mechanistic study", "PPIs may raise amyloid levels in mice."),
        ],
        "structure": [
            structured("PPI use was associated with higher dementia incidence.", None, ["PPI", "dementia"]),
            structured("No association between PPI use and dementia after adjustment.", None, ["PPI", "dementia"]),
            structured("PPIs may raise amyloid levels in mice.", None, ["amyloid"]),
        ],
        "annotate": [
            ann("COHORT", "HIGH", "MODERATE", "yes"),
            ann("COHORT", "HIGH", "MODERATE", "no"),
            ann("UNCLEAR_BASIC", "LOW", "WEAK", "maybe"),
        ],
        "annotate_support": ["yes", "no", "maybe"],
        "neural": "Studies conflict and the mechanism is unproven. The answer is maybe.",
    },
    {
        # neural path names a label outside the frame
        "record": {
            "id": "q07",
            "question": "Which vitamin deficiency classically causes Wernicke encephalopathy?",
            "options": {"A": "Thiamine", "B": "Niacin", "C": "Cobalamin", "D": "Folate"},
            "gold": "A",
        },
        "analyze": analysis(["Wernicke encephalopathy"], ["vitamin deficiency"], mode="BACKGROUND_CONCEPTS",
                            concepts=["Wernicke encephalopathy", "vitamin deficiency"]),
        "docs": [
            doc(7001, "Wernicke encephalopathy review",
                "Wernicke encephalopathy results from thiamine deficiency, often in alcohol use disorder."),
            doc(7002, "Thiamine replacement", "Parenteral thiamine reverses ophthalmoplegia in Wernicke encephalopathy."),
        ],
        "structure": [
            structured("Wernicke encephalopathy results from thiamine deficiency.", None,
                       ["Wernicke encephalopathy", "thiamine"]),
            structured("Parenteral thiamine reverses ophthalmoplegia.", None, ["thiamine"]),
        ],
        "annotate": [
            ann("SYSTEMATIC_REVIEW_META", "HIGH", "STRONG", "A"),
            ann("CASE_REPORT", "MEDIUM", "MODERATE", "A"),
        ],
        "annotate_support": ["A", "A"],
        "neural": neural("E", "Vitamin B1.", 0.6),
    },
    {
        # retrieval fails on both attempts; the evidence pool is empty
        "record": {
            "id": "q08",
            "question": "Does melatonin improve sleep onset latency in children with autism?",
            "options": YNM,
            "gold": "yes",
        },
        "analyze": analysis(["melatonin", "autism"], ["sleep onset", "children"],
                            p=picos("children with autism", "melatonin", "placebo", "sleep onset latency", "RCT")),
        "retrieve": [{"error": "HTTP 503"}, {"error": "HTTP 503"}],
        "neural": neural("yes", "Melatonin shortens sleep onset latency in autistic children; yes.", 0.85),
    },
    {
        # only two documents for any k
        "record": {
            "id": "q09",
            "question": "Does early mobilization shorten hospital stay after hip fracture surgery?",
            "options": YNM,
            "gold": "yes",
        },
        "analyze": analysis(["early mobilization", "hip fracture"], ["length of stay"],
                            p=picos("hip fracture surgery patients", "early mobilization", "delayed mobilization", "length of stay", None)),
        "docs": [
            doc(9001, "Early mobilization trial", "Mobilization within 24 hours shortened length of stay by two days."),
            doc(9002, "Rehabilitation cohort", "Early walkers were discharged sooner."),
        ],
        "structure": [
            structured("Mobilization within 24 hours shortened length of stay by two days.",
                       picos("hip fracture", "early mobilization", "usual care", "length of stay", "RCT"), ["mobilization"]),
            structured("Early walkers were discharged sooner.", None, ["mobilization"]),
        ],
        "annotate": [
            ann("RCT", "HIGH", "MODERATE", "yes"),
            ann("COHORT", "MEDIUM", "MODERATE", "yes"),
        ],
        "annotate_support": ["yes", "yes"],
        "neural": neural("no", "Early mobilization helps recovery and shortens stay.", 0.6),
    },
    {
        # structuring fails twice, evidence passes through raw; annotation returns prose twice
        "record": {
            "id": "q10",
            "question": "Which enzyme is deficient in classic phenylketonuria?",
            "options": {"A": "Tyrosinase", "B": "Phenylalanine hydroxylase", "C": "Homogentisate oxidase", "D": "Fumarylacetoacetase"},
            "gold": "B",
        },
        "analyze": analysis(["phenylketonuria"], ["enzyme deficiency"], mode="BACKGROUND_CONCEPTS",
                            concepts=["phenylketonuria", "enzyme"]),
        "docs": [
            doc(10001, "PKU overview", "Classic phenylketonuria is caused by phenylalanine hydroxylase deficiency."),
            doc(10002, "Newborn screening", "Newborn screening detects raised phenylalanine."),
        ],
        "structure": [
            ["not json", "still not json"],
            structured("Newborn screening detects raised phenylalanine.", None, ["newborn screening"]),
        ],
        "annotate": [
            ann("SYSTEMATIC_REVIEW_META", "HIGH", "STRONG", "B"),
            ["I think this is relevant.", "Relevant, supports B."],
        ],
        "annotate_support": ["B", "NONE"],
        "neural": neural("B", "PKU is due to (B) phenylalanine hydroxylase deficiency.", 0.9),
    },
]


def _lines(stage: str, qid: str, index: int, value) -> list[dict]:
    attempts = value if isinstance(value, list) else [value]
    out = []
    for a in attempts:
        entry = {"stage": stage, "question_id": qid, "item_index": index}
        if isinstance(a, dict) and set(a) == {"error"}:
            entry["error"] = a["error"]
        else:
            entry["response"] = a if isinstance(a, str) else json.dumps(a, ensure_ascii=False)
        out.append(entry)
    return out


def build() -> tuple[list[dict], list[dict]]:
    dataset, replay = [], []
    for spec in QUESTIONS:
        rec = spec["record"]
        qid = rec["id"]
        dataset.append(rec)
        replay += _lines("analyze", qid, 0, spec["analyze"])
        # a document list is one response, so wrap it as a single attempt
        replay += _lines("retrieve", qid, 0, spec.get("retrieve", [spec.get("docs", [])]))
        for i, value in enumerate(spec.get("structure", [])):
            replay += _lines("structure", qid, i, value)
        for i, value in enumerate(spec.get("annotate", [])):
            replay += _lines("annotate", qid, i, value)
        for i, label in enumerate(spec.get("annotate_support", [])):
            replay += _lines("annotate_support", qid, i, {"hypothesis": label})
        replay += _lines("neural", qid, 0, spec["neural"])
        if "arbitrate" in spec:
            replay += _lines("arbitrate", qid, 0, spec["arbitrate"])
    return dataset, replay


def main() -> None:
    OUT.mkdir(exist_ok=True)
    dataset, replay = build()
    with open(OUT / "dataset.jsonl", "w", encoding="utf-8") as fh:
        fh.writelines(json.dumps(r, ensure_ascii=False) + "\n" for r in dataset)
    with open(OUT / "replay.jsonl", "w", encoding="utf-8") as fh:
        fh.writelines(json.dumps(r, ensure_ascii=False) + "\n" for r in replay)
    print(f"wrote {len(dataset)} questions and {len(replay)} replay lines to {OUT}")


if __name__ == "__main__":
    main()
