from pathlib import Path

SCENARIO_DIR = Path(__file__).resolve().parent.parent / 'scenarios'

PREAMBLE = """\
chain 1
chain 2
library 1 1.0 kind=uln
dvn D1 watch=1
executor E
oapp sender chain=1 addr=0x51
oapp receiver chain=2 addr=0x52
peer sender receiver
stack sender remote=2 send=1@1.0 recv=1@1.0 required=D1 executor=E
stack receiver remote=1 send=1@1.0 recv=1@1.0 required=D1 executor=E
"""


def scenario_files():
    return sorted(SCENARIO_DIR.glob('*.lz'))


def with_preamble(timeline: str, preamble: str = PREAMBLE) -> str:
    return preamble + '\n' + timeline
