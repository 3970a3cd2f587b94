import numpy as np
import pytest

from knowtrace.data import (DIALECTS, ColumnMap, Dataset, Sequence, align_labels, apply_multiprior_transform,
                            derive_multipair_classes, detect_columns, ingest, write_delimited)
from knowtrace.errors import AlignmentError, AmbiguousColumnsError, EmptyDatasetError, SchemaError


def write(tmp_path, text, name="log.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_detect_assistments():
    cmap = detect_columns(["user_id", "skill_name", "correct", "order_id"])
    assert cmap == DIALECTS["assistments"]
    assert cmap.default_guess_class == "template_id"


def test_detect_cognitive_tutor():
    cmap = detect_columns(["Row", "Anon Student Id", "KC(Default)", "Correct First Attempt", "Step Name"])
    assert cmap.student == "Anon Student Id" and cmap.order == "Row"


def test_detect_no_match():
    assert detect_columns(["foo", "bar"]) is None


def test_detect_ambiguous():
    with pytest.raises(AmbiguousColumnsError):
        detect_columns(["user_id", "Anon Student Id", "skill_name", "correct", "order_id"])


def test_column_map_rejects_duplicates():
    with pytest.raises(SchemaError):
        ColumnMap(student="a", skill="a", correct="c", order="o")


def test_ingest_sorts_by_order(tmp_path):
    path = write(tmp_path, "user_id,skill_name,correct,order_id\n"
                           "u,s,1,3\nu,s,0,1\nu,s,1,2\nu,s,1,4\n")
    ds = ingest(path)
    np.testing.assert_array_equal(ds.skills["s"][0].obs, [0, 1, 1, 1])


def test_ingest_drops_non_binary(tmp_path):
    path = write(tmp_path, "user_id,skill_name,correct,order_id\nu,s,1,1\nu,s,2,2\nu,s,0,3\n")
    ds = ingest(path)
    assert ds.report.rows_dropped == 1
    assert ds.report.rows_read == 3
    np.testing.assert_array_equal(ds.skills["s"][0].obs, [1, 0])


def test_ingest_guess_classes_first_appearance(tmp_path):
    path = write(tmp_path, "user_id,skill_name,correct,order_id,template_id\nu,s,1,1,t9\nu,s,0,2,t4\n")
    cmap = ColumnMap("user_id", "skill_name", "correct", "order_id", guess_class="template_id")
    ds = ingest(path, cmap)
    np.testing.assert_array_equal(ds.skills["s"][0].guess_classes, [0, 1])
    assert ds.guess_labels["s"] == ["t9", "t4"]


def test_ingest_stable_ties_and_tabs(tmp_path):
    path = write(tmp_path, "user_id\tskill_name\tcorrect\torder_id\nu\ts\t1\t5\nu\ts\t0\t5\nu\ts\t0\t1\n",
                 name="log.tsv")
    ds = ingest(path)
    np.testing.assert_array_equal(ds.skills["s"][0].obs, [0, 1, 0])


def test_ingest_groups_skills_and_students(tmp_path):
    path = write(tmp_path, "user_id,skill_name,correct,order_id\n"
                           "a,x,1,1\nb,x,0,2\na,y,0,3\na,x,0,4\n")
    ds = ingest(path)
    assert list(ds.skills) == ["x", "y"]
    assert [s.student for s in ds.skills["x"]] == ["a", "b"]
    np.testing.assert_array_equal(ds.skills["x"][0].obs, [1, 0])


def test_ingest_skill_filter(tmp_path):
    path = write(tmp_path, "user_id,skill_name,correct,order_id\na,x,1,1\na,y,0,2\n")
    assert list(ingest(path, skills=["y"]).skills) == ["y"]


def test_ingest_missing_column(tmp_path):
    path = write(tmp_path, "user_id,skill_name,correct,order_id\na,x,1,1\n")
    cmap = ColumnMap("user_id", "skill_name", "correct", "order_id", guess_class="template_id")
    with pytest.raises(SchemaError, match="template_id"):
        ingest(path, cmap)


def test_ingest_empty(tmp_path):
    path = write(tmp_path, "user_id,skill_name,correct,order_id\na,x,2,1\n")
    with pytest.raises(EmptyDatasetError):
        ingest(path)


def test_ingest_unreadable(tmp_path):
    with pytest.raises(OSError):
        ingest(tmp_path / "missing.csv")


def test_ingest_positional_columns(tmp_path):
    path = write(tmp_path, "a,b,c,d\n1,k,1,2\n1,k,0,1\n", name="raw.txt")
    ds = ingest(path, ColumnMap(student=0, skill=1, correct=2, order=3))
    np.testing.assert_array_equal(ds.skills["k"][0].obs, [0, 1])


def test_ingest_is_deterministic(tmp_path):
    path = write(tmp_path, "user_id,skill_name,correct,order_id,template_id\n"
                           "a,x,1,1,t\nb,x,0,2,u\na,x,0,3,u\n")
    cmap = ColumnMap("user_id", "skill_name", "correct", "order_id", guess_class="template_id")
    assert ingest(path, cmap) == ingest(path, cmap)


def test_multiprior_correct_first():
    ds = Dataset({"s": [Sequence("u", [1, 0])]})
    out = apply_multiprior_transform(ds).skills["s"][0]
    np.testing.assert_array_equal(out.obs, [1, 1, 0])
    np.testing.assert_array_equal(out.learn_classes[1:], [0, 2])
    np.testing.assert_array_equal(out.mask, [False, True, True])


def test_multiprior_incorrect_first():
    out = apply_multiprior_transform(Dataset({"s": [Sequence("u", [0])]})).skills["s"][0]
    np.testing.assert_array_equal(out.obs, [0, 0])
    np.testing.assert_array_equal(out.learn_classes[1:], [1])


def test_multiprior_empty_dataset():
    assert apply_multiprior_transform(Dataset()).skills == {}


def test_multiprior_lengths_and_classes():
    ds = Dataset({"s": [Sequence("a", [1, 1, 0]), Sequence("b", [0, 1])]})
    out = apply_multiprior_transform(ds)
    assert [len(s) for s in out.skills["s"]] == [4, 3]
    used = set(np.concatenate([s.learn_classes[1:] for s in out.skills["s"]]).tolist())
    assert used == {0, 1, 2}
    assert len(out.learn_labels["s"]) == 3


def test_multipair_classes():
    ds = Dataset({"s": [Sequence("u", [1, 0, 1], items=("a", "b", "b"))]})
    out = derive_multipair_classes(ds)
    labels = out.learn_labels["s"]
    lc = out.skills["s"][0].learn_classes
    assert lc[0] == 0
    assert labels[lc[1]] == ("a", "b") and labels[lc[2]] == ("b", "b")


def test_multipair_single_step():
    out = derive_multipair_classes(Dataset({"s": [Sequence("u", [1], items=("a",))]}))
    assert out.learn_labels["s"] == ["<start>"]


def test_multipair_shared_dictionary():
    ds = Dataset({"s": [Sequence("u", [1, 0], items=("a", "b")), Sequence("v", [0, 0, 1], items=("c", "a", "b"))]})
    out = derive_multipair_classes(ds).skills["s"]
    assert out[0].learn_classes[1] == out[1].learn_classes[2]


def test_multipair_alignment_error():
    ds = Dataset({"s": [Sequence("u", [1, 0])]})
    with pytest.raises(AlignmentError):
        derive_multipair_classes(ds, {("s", "u"): ["a"]})


def test_align_labels_unknown_maps_to_zero():
    ds = Dataset({"s": [Sequence("u", [1, 0, 1], guess_classes=[0, 1, 2])]}, guess_labels={"s": ["b", "z", "a"]})
    out = align_labels(ds, {"s": ["default"]}, {"s": ["a", "b"]})
    np.testing.assert_array_equal(out.skills["s"][0].guess_classes, [1, 0, 0])


def test_write_then_ingest_round_trip(tmp_path):
    seqs = [Sequence("a", [1, 0, 1], guess_classes=[0, 1, 0]), Sequence("b", [0, 0], guess_classes=[1, 1])]
    ds = Dataset({"k": seqs}, guess_labels={"k": ["t1", "t2"]})
    path = tmp_path / "out.csv"
    write_delimited(ds, path)
    back = ingest(path, ColumnMap("user_id", "skill_name", "correct", "order_id", guess_class="template_id"))
    assert back.skills["k"] == seqs
    assert back.guess_labels == ds.guess_labels


def test_sequence_rejects_non_binary():
    with pytest.raises(SchemaError):
        Sequence("u", [0, 2])


def test_dataset_rejects_out_of_range_class():
    with pytest.raises(SchemaError):
        Dataset({"s": [Sequence("u", [1], guess_classes=[1])]})
