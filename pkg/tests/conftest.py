from pathlib import Path

import pytest

from hragent.schema_model import parse_schema

SCHEMA_DIR = Path(__file__).parent.parent / "schemas"

TIME_OFF_UTTERANCE = "I am taking next Monday off as a vacation day."
APPOINTMENT_UTTERANCE = (
    "I would like to schedule a doctor's appointment for next Tuesday "
    "at 2pm to get a physical exam."
)
APPOINTMENT_QUESTIONS = (
    "What type of appointment does the user want to schedule?",
    "When does the user want to schedule the appointment?",
    "What time does the user want the appointment?",
    "What is the purpose of the appointment?",
    "What action does the user want the recipient to take?",
    "On what date is the user requesting the appointment?",
    "Does the user provide the date for the requested appointment?",
    "Does the user provide the time for the requested appointment?",
)


CRITERION_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture
def time_off_schema():
    return parse_schema((SCHEMA_DIR / "time_off.json").read_text())


@pytest.fixture
def medical_claim_schema():
    return parse_schema((SCHEMA_DIR / "medical_claim.json").read_text())


@pytest.fixture
def schema_dir():
    return str(SCHEMA_DIR)
