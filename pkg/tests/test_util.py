import logging

from util import LogLevel, log_and_print, setup_logging


def test_log_and_print(capsys, caplog):
    logger = logging.getLogger("test_logger")

    with caplog.at_level(logging.DEBUG, logger="test_logger"):
        log_and_print(logger, LogLevel.WARNING, "three runs aborted")

    captured = capsys.readouterr()
    assert captured.out == ""
    assert captured.err == "three runs aborted\n"
    assert caplog.records[-1].levelno == logging.WARNING


def test_setup_logging(tmp_path):
    setup_logging(tmp_path / "logs")
    logging.getLogger("test_logger").info("hello")

    files = list((tmp_path / "logs").iterdir())
    assert len(files) == 1
    assert files[0].name.startswith("log_")
