import numpy as np
import pytest
from PIL import Image

from hseg import FormatError, ImageBuffer, IoError, load_image, save_image


def write_png(path, array, mode=None):
    Image.fromarray(array, mode=mode).save(path, format="PNG")


def test_all_black_rgb_png(tmp_path):
    path = tmp_path / "black.png"
    write_png(path, np.zeros((4, 4, 3), dtype=np.uint8))
    buf = load_image(path)
    assert (buf.width, buf.height, buf.channels) == (4, 4, 3)
    assert buf.to_bytes() == b"\x00" * 48


def test_rgb_buffer_length(tmp_path):
    path = tmp_path / "rgb.png"
    write_png(path, np.random.default_rng(0).integers(0, 256, (224, 224, 3), dtype=np.uint8))
    buf = load_image(path)
    assert len(buf.to_bytes()) == 224 * 224 * 3


def test_grayscale_maps_to_one_channel(tmp_path):
    path = tmp_path / "gray.png"
    write_png(path, np.full((5, 7), 13, dtype=np.uint8), mode="L")
    buf = load_image(path)
    assert buf.channels == 1
    assert buf.pixels.shape == (5, 7, 1)


def test_palette_expands_to_rgb(tmp_path):
    path = tmp_path / "pal.png"
    im = Image.fromarray(np.arange(16, dtype=np.uint8).reshape(4, 4) * 16, mode="L")
    im.convert("P").save(path, format="PNG")
    assert load_image(path).channels == 3


def test_truncated_file_raises_io_error(tmp_path):
    path = tmp_path / "trunc.png"
    write_png(path, np.zeros((16, 16, 3), dtype=np.uint8))
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(IoError):
        load_image(path)


def test_missing_file_raises_io_error(tmp_path):
    with pytest.raises(IoError):
        load_image(tmp_path / "nope.png")


def test_sixteen_bit_raises_format_error(tmp_path):
    path = tmp_path / "deep.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(path, format="PNG")
    with pytest.raises(FormatError):
        load_image(path)


def test_alpha_raises_format_error(tmp_path):
    path = tmp_path / "rgba.png"
    write_png(path, np.zeros((4, 4, 4), dtype=np.uint8), mode="RGBA")
    with pytest.raises(FormatError):
        load_image(path)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    buf = ImageBuffer.from_array(rng.integers(0, 256, (9, 6, 3), dtype=np.uint8))
    path = tmp_path / "rt.png"
    save_image(buf, path)
    assert load_image(path) == buf


def test_buffer_validates_shape():
    with pytest.raises(ValueError):
        ImageBuffer(width=2, height=2, channels=3, pixels=np.zeros((2, 2, 1), np.uint8))
    with pytest.raises(ValueError):
        ImageBuffer(width=0, height=2, channels=1, pixels=np.zeros((2, 0, 1), np.uint8))
    with pytest.raises(ValueError):
        ImageBuffer(width=2, height=2, channels=2, pixels=np.zeros((2, 2, 2), np.uint8))


def test_buffer_pixels_are_immutable():
    buf = ImageBuffer.from_array(np.zeros((2, 2, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        buf.pixels[0, 0, 0] = 1
