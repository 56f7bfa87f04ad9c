"""
Codec golden vectors.

``golden_vectors()`` recomputes every vector from the codec; the frozen
expected values live in ``fixtures/golden_vectors.txt``.
"""

from pathlib import Path as FilePath

from .codec import (
    ExecutorGasOptions, NativeDropOptions, Packet, Path, WorkerOption, WorkerOptions, address,
    encode_header, encode_options, encode_packet, header_hash, make_header, payload_hash,
)

FIXTURE = FilePath(__file__).resolve().parent / 'fixtures' / 'golden_vectors.txt'

GOLDEN_PATH = Path(src_eid=1, sender=address(1), dst_eid=2, receiver=address(2))


def golden_vectors() -> dict:
    header = make_header(1, 1, GOLDEN_PATH)
    return {
        'guid': header.guid.hex(),
        'header': encode_header(header).hex(),
        'header_hash': header_hash(header).hex(),
        'payload_hash_zero_guid_empty': payload_hash(bytes(32), b'').hex(),
        'payload_hash_hi': payload_hash(header.guid, b'hi').hex(),
        'packet_hi': encode_packet(Packet(header, b'hi')).hex(),
        'options_type1_gas_200000': encode_options(ExecutorGasOptions(200_000)).hex(),
        'options_type2_gas_200000_drop_7': encode_options(
            NativeDropOptions(200_000, 7, address(2))).hex(),
        'options_type3_worker_1': encode_options(WorkerOptions((WorkerOption(1, 1),))).hex(),
    }


def load_fixture(path=FIXTURE) -> dict:
    vectors = {}
    with open(path, encoding='utf-8') as fh:
        for line in fh:
            line = line.split('#', 1)[0].strip()
            if line:
                name, value = line.split()
                vectors[name] = value
    return vectors
