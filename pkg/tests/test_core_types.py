import json
import math

import pytest

from cn_sentinel.core_types import (
    Attribute,
    ControlMessage,
    EntityRef,
    Label,
    LabelKind,
    MessageFormatError,
    NetworkFunctionKind,
    Protocol,
    flatten_payload,
    nest_attributes,
    parse_jsonl_record,
    read_jsonl,
    serialize_message,
    write_jsonl,
)
from cn_sentinel.rng import SplitMix64


def test_parse_basic_record():
    line = (
        '{"msg_id":1,"ts":0.5,"recv":{"id":"amf-1","nf":"AMF"},'
        '"send":{"id":"gnb-1","nf":"GNB"},"proto":"NGAP","payload":{"ip":"192.168.1.1"}}'
    )
    msg = parse_jsonl_record(line)
    assert msg.msg_id == 1
    assert msg.ts == 0.5
    assert msg.recv == EntityRef("amf-1", NetworkFunctionKind.AMF)
    assert msg.send == EntityRef("gnb-1", NetworkFunctionKind.GNB)
    assert msg.proto is Protocol.NGAP
    assert msg.attrs == (Attribute("ip", "192.168.1.1"),)
    assert not msg.attrs[0].is_numeric
    assert msg.label is None


def test_parse_empty_payload():
    line = (
        '{"msg_id":0,"ts":0,"recv":{"id":"a","nf":"AMF"},'
        '"send":{"id":"b","nf":"UE"},"proto":"NAS","payload":{}}'
    )
    assert parse_jsonl_record(line).attrs == ()


def test_parse_unknown_nf_kind():
    line = (
        '{"msg_id":0,"ts":0,"recv":{"id":"a","nf":"XYZ"},'
        '"send":{"id":"b","nf":"UE"},"proto":"NAS","payload":{}}'
    )
    with pytest.raises(MessageFormatError, match="unknown NF kind"):
        parse_jsonl_record(line, lineno=7)


def test_parse_unknown_proto():
    line = (
        '{"msg_id":0,"ts":0,"recv":{"id":"a","nf":"AMF"},'
        '"send":{"id":"b","nf":"UE"},"proto":"HTTP","payload":{}}'
    )
    with pytest.raises(MessageFormatError, match="unknown proto"):
        parse_jsonl_record(line)


def test_parse_reports_line_number():
    with pytest.raises(MessageFormatError, match="line 12"):
        parse_jsonl_record("{not json", lineno=12)


def test_parse_missing_field():
    with pytest.raises(MessageFormatError, match="missing required field"):
        parse_jsonl_record('{"msg_id":0,"ts":0}')


def test_parse_rejects_non_finite():
    line = (
        '{"msg_id":0,"ts":0,"recv":{"id":"a","nf":"AMF"},'
        '"send":{"id":"b","nf":"UE"},"proto":"NAS","payload":{"x":NaN}}'
    )
    with pytest.raises(MessageFormatError, match="non-finite"):
        parse_jsonl_record(line)


def test_parse_label():
    line = (
        '{"msg_id":3,"ts":1.5,"recv":{"id":"a","nf":"AMF"},"send":{"id":"b","nf":"UE"},'
        '"proto":"NAS","payload":{},"label":{"kind":"replay_dos","proc":"registration"}}'
    )
    msg = parse_jsonl_record(line)
    assert msg.label == Label(LabelKind.REPLAY_DOS, "registration")


def test_flatten_nested_map():
    assert flatten_payload({"a": {"b": 7}}) == (Attribute("a.b", 7.0),)


def test_flatten_lexicographic_order():
    attrs = flatten_payload({"nfType": "SMF", "ip": "192.168.1.1"})
    assert attrs == (Attribute("ip", "192.168.1.1"), Attribute("nfType", "SMF"))


def test_flatten_array_indexing():
    attrs = flatten_payload({"x": ["u", "v"]})
    assert attrs == (Attribute("x.0", "u"), Attribute("x.1", "v"))


def test_flatten_digit_strings_stay_text():
    attrs = flatten_payload({"port": "8080", "count": 8080})
    assert attrs[1].value == "8080" and not attrs[1].is_numeric
    assert attrs[0].value == 8080.0 and attrs[0].is_numeric


def test_flatten_rejects_null_with_path():
    with pytest.raises(MessageFormatError, match="a.b"):
        flatten_payload({"a": {"b": None}})


def test_flatten_rejects_bool():
    with pytest.raises(MessageFormatError):
        flatten_payload({"flag": True})


def test_flatten_depth_limit():
    payload = {}
    node = payload
    for _ in range(40):
        node["k"] = {}
        node = node["k"]
    node["leaf"] = 1
    with pytest.raises(MessageFormatError, match="nesting deeper"):
        flatten_payload(payload)


def test_flatten_deterministic():
    payload = {"b": {"x": 1, "a": "s"}, "a": [1.5, {"z": "w"}]}
    assert flatten_payload(payload) == flatten_payload(payload)


def _random_payload(rng: SplitMix64, depth: int):
    kind = rng.randint(4) if depth > 0 else rng.randint(2)
    keys = "abcdefgh"
    if kind == 0:
        return "".join(keys[rng.randint(8)] for _ in range(5))
    if kind == 1:
        return float(rng.randint(1000)) + 0.5
    if kind == 2:
        return {
            f"{keys[rng.randint(8)]}{i}": _random_payload(rng, depth - 1)
            for i in range(1 + rng.randint(3))
        }
    return [_random_payload(rng, depth - 1) for _ in range(1 + rng.randint(3))]


def test_flatten_nest_round_trip_1000_random_payloads():
    rng = SplitMix64(20240814)
    for _ in range(1000):
        payload = {"root" + str(i): _random_payload(rng, 3) for i in range(1 + rng.randint(3))}
        attrs = flatten_payload(payload)
        assert nest_attributes(attrs) == payload


def test_serialize_parse_round_trip(tmp_path):
    msg = ControlMessage(
        5, 1.25,
        EntityRef("amf-1", NetworkFunctionKind.AMF),
        EntityRef("ue-3", NetworkFunctionKind.UE),
        Protocol.NAS,
        (Attribute("msgType", "RegistrationRequest"), Attribute("port", 8080.0)),
        Label(LabelKind.BENIGN, "registration"),
    )
    assert parse_jsonl_record(serialize_message(msg)) == msg

    path = tmp_path / "d.jsonl"
    write_jsonl([msg], path)
    assert read_jsonl(path) == [msg]


def test_read_jsonl_rejects_duplicate_ids(tmp_path):
    msg = ControlMessage(
        1, 0.0, EntityRef("a", NetworkFunctionKind.AMF),
        EntityRef("b", NetworkFunctionKind.UE), Protocol.NAS, (),
    )
    path = tmp_path / "d.jsonl"
    path.write_text(serialize_message(msg) + "\n" + serialize_message(msg) + "\n")
    with pytest.raises(MessageFormatError, match="duplicate msg_id"):
        read_jsonl(path)


def test_attribute_validation():
    with pytest.raises(MessageFormatError):
        Attribute("", "x")
    with pytest.raises(MessageFormatError):
        Attribute("a..b", "x")
    with pytest.raises(MessageFormatError):
        Attribute("a", math.inf)
    assert Attribute("a", 3).value == 3.0  # ints normalize to float


def test_entity_ref_validation():
    with pytest.raises(MessageFormatError):
        EntityRef("", NetworkFunctionKind.AMF)
    assert EntityRef("amf-1", NetworkFunctionKind.AMF).key == "amf-1|AMF"


def test_control_message_validation():
    recv = EntityRef("a", NetworkFunctionKind.AMF)
    send = EntityRef("b", NetworkFunctionKind.UE)
    with pytest.raises(MessageFormatError):
        ControlMessage(-1, 0.0, recv, send, Protocol.NAS, ())
    with pytest.raises(MessageFormatError):
        ControlMessage(0, -1.0, recv, send, Protocol.NAS, ())
    with pytest.raises(MessageFormatError):
        ControlMessage(0, math.nan, recv, send, Protocol.NAS, ())


def test_closed_enums():
    assert {k.value for k in NetworkFunctionKind} == {
        "AMF", "AUSF", "NRF", "SMF", "UDM", "PCF", "UDR", "UPF", "GNB", "UE"
    }
    assert {p.value for p in Protocol} == {"SBI", "NGAP", "NAS", "PFCP"}
    assert {l.value for l in LabelKind} == {
        "benign", "replay_dos", "param_tamper", "ddos_coord", "seq_violation"
    }


def test_label_constants_json_stable():
    # wire names are part of the dataset format; lock them
    msg = json.loads(
        serialize_message(
            ControlMessage(
                0, 0.0, EntityRef("a", NetworkFunctionKind.AMF),
                EntityRef("b", NetworkFunctionKind.UE), Protocol.NAS, (),
                Label(LabelKind.DDOS_COORD, "x"),
            )
        )
    )
    assert set(msg) == {"msg_id", "ts", "recv", "send", "proto", "payload", "label"}
    assert msg["label"] == {"kind": "ddos_coord", "proc": "x"}
