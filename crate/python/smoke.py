"""Smoke test for the Python bindings against the bundled fixtures.

Build and install the extension first:
    pip install --no-build-isolation ./crates/python
"""

import pathlib
import tempfile

import ontorag

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "fixtures"

MAPPING_QUERY = """```sparql
SELECT ?source_code ?source_label ?target_code ?target_label WHERE {
  GRAPH <urn:ontorag:graph:map:icd9cm-icd10cm> { ?m <urn:ontorag:p:mapSource> ?s . ?m <urn:ontorag:p:mapTarget> ?t }
  GRAPH <urn:ontorag:graph:icd9cm> { ?s <urn:ontorag:p:code> ?source_code . ?s <urn:ontorag:p:label> ?source_label . FILTER(?source_code = "5849") }
  GRAPH <urn:ontorag:graph:icd10cm> { ?t <urn:ontorag:p:code> ?target_code . ?t <urn:ontorag:p:label> ?target_label }
}
```"""


def main():
    store = ontorag.Store()
    report = store.ingest(str(FIXTURES / "manifest.json"))
    assert report["records_parsed"] == 75, report
    assert report["dangling_refs"] == []
    assert len(store) == report["quads_emitted"]

    table = store.query("SELECT ?c WHERE { GRAPH <urn:ontorag:graph:icd9cm> { ?s <urn:ontorag:p:code> ?c } }")
    assert len(table["rows"]) == 20, table

    assert ontorag.score_direct(["N179", "N19"], ["N179", "N170", "N178"]) == 0.5
    assert ontorag.parse_level("Mapping level: B") == "B"
    assert ontorag.parse_level("no letter here") is None

    mock = ontorag.Provider.mock(ordered=["C", "The labels conflict on acuity."])
    graded = ontorag.assess("acute renal failure", "chronic kidney disease", mock)
    assert graded["level"] == "C", graded
    assert len(mock.transcript()) == 2

    mock = ontorag.Provider.mock(ordered=[MAPPING_QUERY], default="A")
    outcome = ontorag.query("Which ICD-10-CM codes does 584.9 map to?", store, mock)
    targets = sorted(row[2]["value"] for row in outcome["result"]["rows"])
    assert targets == ["N179", "N19"], targets
    assert outcome["attempts"] == 1

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        review = ontorag.ReviewModel(store, str(tmp / "decisions.jsonl"))
        assert len(review) == 30
        run = review.assess_missing(ontorag.Provider.mock(default="A"))
        assert run["assessed"] == 30, run
        first = review.list(page_size=5)["items"][0]
        assert review.decide(first["id"], "reject", "smoke")["status"] == "rejected"
        assert review.bulk_decide("A", "accept", "smoke") == 29
        stats = review.stats()
        assert stats["by_status"]["accepted"] == 29, stats
        assert review.export_refined(str(tmp / "refined.nq")) == 29 * 7

        reopened = ontorag.ReviewModel(store, str(tmp / "decisions.jsonl"))
        assert reopened.stats()["by_status"]["rejected"] == 1

    print("python smoke test passed")


if __name__ == "__main__":
    main()
