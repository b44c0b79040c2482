"""Model versioning, content addressing, and deployment directives."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flapu import canonical
from flapu.errors import ClientNotValidated, DuplicateVersion, UnknownModel, WrongClient, WrongStatus
from flapu.learning import ModelWeights
from flapu.modelstore import (
    ISSUED_BY_ADMIN,
    ISSUED_BY_RUN,
    ModelStore,
    ModelVersion,
)
from flapu.provenance import Ledger


def weights(*values) -> ModelWeights:
    return ModelWeights(values=np.asarray(values, dtype=float))


@pytest.fixture
def store():
    return ModelStore(Ledger(), client_is_validated=lambda cid: not cid.startswith("bad"))


class TestVersions:
    def test_store_and_retrieve_byte_identical(self, store):
        stored = store.store_model("run1", 0, 3, weights(1.5, -2.0, 0.25))
        fetched = store.get_model(stored.model_id)
        assert fetched.weights_doc == stored.weights_doc
        assert fetched.verify()
        np.testing.assert_array_equal(fetched.weights().values, [1.5, -2.0, 0.25])

    def test_duplicate_coordinates_rejected(self, store):
        store.store_model("run1", 0, 3, weights(1.0, 2.0))
        with pytest.raises(DuplicateVersion):
            store.store_model("run1", 0, 3, weights(9.0, 9.0))

    def test_same_round_different_grid_is_fine(self, store):
        a = store.store_model("run1", 0, 1, weights(1.0, 2.0))
        b = store.store_model("run1", 1, 1, weights(1.0, 2.0))
        assert a.model_id != b.model_id

    def test_unknown_model(self, store):
        with pytest.raises(UnknownModel):
            store.get_model("nope")

    def test_lineage_walks_back_to_initial(self, store):
        for r in range(4):
            store.store_model("run1", 0, r, weights(float(r), 0.0))
        tip = store.latest_model("run1", 0)
        assert tip.round == 3
        chain = store.lineage(tip.model_id)
        assert [v.round for v in chain] == [3, 2, 1, 0]

    def test_latest_requires_some_version(self, store):
        with pytest.raises(UnknownModel):
            store.latest_model("run1", 0)

    def test_doc_round_trip_preserves_hash(self, store):
        version = store.store_model("run1", 0, 0, weights(0.1, 0.2, 0.3))
        clone = ModelVersion.from_doc(canonical.loads(canonical.dumps(version.to_doc())))
        assert clone.content_hash == version.content_hash
        assert clone.verify()


@settings(max_examples=40)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False), min_size=2, max_size=12))
def test_content_hash_is_reproducible(values):
    version = ModelVersion(
        model_id="m", run_id="r", grid_index=0, round=0,
        weights_doc=ModelWeights(np.asarray(values)).to_doc(),
    )
    assert version.verify()
    assert canonical.content_hash(version.weights_doc) == version.content_hash


class TestDirectives:
    def publish(self, store, targets=("c1", "c2", "c3"), issued_by=ISSUED_BY_RUN, **kw):
        version = store.store_model("run1", 0, 2, weights(1.0, 0.5))
        return store.publish_deployment(list(targets), version.model_id, issued_by, **kw)

    def test_one_published_directive_per_target(self, store):
        issued = self.publish(store)
        assert [d.client_id for d in issued] == ["c1", "c2", "c3"]
        assert all(d.status == "Published" for d in issued)
        assert len(store._ledger.query(action="publish_deployment")) == 1

    def test_serials_increase_per_client(self, store):
        self.publish(store, targets=["c1"])
        second = store.publish_deployment(["c1"], "run1.g0.r2", ISSUED_BY_ADMIN)
        stream = store.directives_for("c1", mark_fetched=False)
        assert [d.serial for d in stream] == [1, 2]
        assert second[0].issued_by == ISSUED_BY_ADMIN

    def test_unknown_model_cannot_be_published(self, store):
        with pytest.raises(UnknownModel):
            store.publish_deployment(["c1"], "missing", ISSUED_BY_RUN)

    def test_non_validated_target_is_refused(self, store):
        version = store.store_model("run1", 0, 0, weights(1.0, 0.5))
        with pytest.raises(ClientNotValidated):
            store.publish_deployment(["c1", "bad-actor"], version.model_id, ISSUED_BY_RUN)

    def test_fetch_moves_published_to_fetched_once(self, store):
        self.publish(store, targets=["c1"])
        first = store.directives_for("c1")
        assert [d.status for d in first] == ["Fetched"]
        store.directives_for("c1")  # second poll: no further transition
        fetch_records = store._ledger.query(action="deployment_fetched")
        assert len(fetch_records) == 1

    def test_acknowledge_after_fetch(self, store):
        (directive,) = self.publish(store, targets=["c1"])
        store.directives_for("c1")
        acked = store.acknowledge(directive.directive_id, "c1", "deployed", gate_metric=0.04)
        assert acked.status == "Acknowledged"
        assert acked.outcome == "deployed"
        assert acked.gate_metric == 0.04

    def test_rejection_is_recorded_with_metric(self, store):
        (directive,) = self.publish(store, targets=["c1"])
        store.directives_for("c1")
        acked = store.acknowledge(directive.directive_id, "c1", "rejected", gate_metric=0.21)
        assert (acked.outcome, acked.gate_metric) == ("rejected", 0.21)
        record = store._ledger.query(action="acknowledge")[-1]
        assert record.outcome == "rejected"

    def test_acknowledge_requires_prior_fetch(self, store):
        (directive,) = self.publish(store, targets=["c1"])
        with pytest.raises(WrongStatus):
            store.acknowledge(directive.directive_id, "c1", "deployed")

    def test_acknowledge_from_wrong_client(self, store):
        (directive,) = self.publish(store, targets=["c1"])
        store.directives_for("c1")
        with pytest.raises(WrongClient):
            store.acknowledge(directive.directive_id, "c2", "deployed")

    def test_status_only_moves_forward(self, store):
        (directive,) = self.publish(store, targets=["c1"])
        store.directives_for("c1")
        store.acknowledge(directive.directive_id, "c1", "deployed")
        with pytest.raises(WrongStatus):
            store.acknowledge(directive.directive_id, "c1", "rejected")

    def test_outcome_vocabulary_is_closed(self, store):
        (directive,) = self.publish(store, targets=["c1"])
        store.directives_for("c1")
        with pytest.raises(WrongStatus):
            store.acknowledge(directive.directive_id, "c1", "maybe")

    def test_recipe_travels_with_the_directive(self, store):
        recipe = {"lag_window": 2, "normalization_bounds": {"load": [0.0, 0.007]}}
        (directive,) = self.publish(store, targets=["c1"], recipe=recipe)
        assert store.directives_for("c1")[0].to_doc()["recipe"] == recipe
