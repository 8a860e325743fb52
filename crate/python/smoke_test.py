"""Quick end-to-end check of the casegraph Python module.

Build and install first:  maturin develop -m crates/py/Cargo.toml
"""

import json
import sys
import tempfile
from pathlib import Path

import casegraph


def main():
    with tempfile.TemporaryDirectory() as tmp:
        engine = casegraph.Engine(data_dir=tmp, user="ana")
        job = engine.ingest("Anna met Bob in Berlin on 12.03.2022.", name="note.txt")
        assert job["status"] == "done", job
        doc = job["document"]
        assert "Berlin" in engine.document_text(doc)

        hits = engine.search({"text": "berlin", "modes": ["exact"]})
        assert hits and hits[0]["mode"] == "exact", hits

        zora, created = engine.add_node("Thing/Entity/Person", "Zora")
        assert created
        again, created = engine.add_node("Thing/Entity/Person", "  zora ")
        assert again == zora and not created
        edge = engine.add_edge("related_to", zora, hits[0]["target"]["id"], grade="B2")

        hidden = engine.hide(zora, "duplicate")
        assert set(hidden) == {zora, edge}, hidden
        visible = set(engine.view()["nodes"])
        assert zora not in visible
        assert zora in engine.view({"include_hidden": True})["nodes"]

        positions = engine.layout(params={"iterations": 20, "seed": 7})
        assert len(positions) == len(visible)
        assert positions == engine.layout(params={"iterations": 20, "seed": 7})

        bundle = engine.report([doc])
        assert casegraph.verify_report(bundle) == []
        assert "note.txt" in engine.report([doc], format="html")

        status = engine.verify()
        assert status["ok"] and status["head_hash"] == engine.head_hash, status
        entries = engine.log_length
        del engine

        log = Path(tmp) / "provenance.ndjson"
        assert casegraph.verify_log(log)["entries"] == entries
        reopened = casegraph.Engine(data_dir=tmp)
        assert reopened.head_hash == status["head_hash"]
        assert reopened.trace(zora)[-1]["mutation"] == "hide", reopened.trace(zora)[-1]
        del reopened

        lines = log.read_bytes().split(b"\n")
        lines[3] = lines[3].replace(b'"seq":2', b'"seq":9')
        log.write_bytes(b"\n".join(lines))
        broken = casegraph.verify_log(log)
        assert not broken["ok"], broken
        try:
            casegraph.Engine(data_dir=tmp)
        except casegraph.CaseGraphError as e:
            assert "provenance chain broken" in str(e), e
        else:
            raise AssertionError("opened a tampered log")

    mentions = casegraph.extract_entities("Anna flew to Berlin.")
    assert {(m["surface"], m["label"]) for m in mentions} >= {("Anna", "PERSON"), ("Berlin", "LOCATION")}

    gold = "\n".join(
        json.dumps(s)
        for s in [
            {"doc": "d1", "start": 0, "end": 4, "label": "PERSON"},
            {"doc": "d1", "start": 13, "end": 19, "label": "LOCATION"},
        ]
    )
    report = casegraph.evaluate_ner(gold, {"d1": "Anna flew to Berlin."})
    assert report["micro"]["tp"] == 2 and report["micro"]["fn"] == 0, report

    print("casegraph smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
