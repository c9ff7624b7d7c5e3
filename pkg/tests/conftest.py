import pytest

from motiondesk.pipeline import parse_config

TINY_CONFIG = """
# a corpus and schedule small enough for unit tests
n_classes = 3
train_per_class = 2
test_per_class = 2
n_videos = 6
video_frames = 16
frame_size = 16
sprite_size = 7
jitter = 2
k = 6
dt = 3
K = 2
n_clusters = 4
flow_levels = 2
flow_iterations = 10
d_v = 8
d_m = 4
iterations = 3,3,3,3,3
image_batch = 4
clip_batch = 2
seeds = 0,1
variants = unreg,unreg+motion,no_mra,full,only_mr
"""


@pytest.fixture
def tiny_cfg():
    return parse_config(TINY_CONFIG)


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG)
    return path


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
