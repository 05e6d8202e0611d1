import numpy as np
import pytest

from rollmia import PianorollShape, Pianoroll, synth_generate


@pytest.fixture(scope="session")
def desk_shape():
    return PianorollShape(tracks=2, bars=1, steps_per_bar=16, pitches=24)


@pytest.fixture(scope="session")
def small_population(desk_shape):
    return synth_generate(7, 300, desk_shape)


def make_roll(shape: PianorollShape, on_cells=()):
    cells = np.zeros(shape.dims(), dtype=np.uint8)
    for idx in on_cells:
        cells[idx] = 1
    return Pianoroll(shape, cells)
