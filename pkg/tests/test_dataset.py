import numpy as np
import pytest

from facemood.convnet import LayerTap
from facemood.dataset import (
    DesignMatrix,
    ScanReport,
    build_design_matrix,
    peak_frame,
    scan_corpus,
)
from facemood.errors import IoError
from facemood.image import ImagePlane, save_image


def write_ck_tree(root, spec):
    """spec: {participant: {sequence: (n_frames, emotion_code | None)}}"""
    images = root / "images"
    labels = root / "labels"
    rng = np.random.default_rng(42)
    for part, seqs in spec.items():
        for seq, (n_frames, code) in seqs.items():
            seq_dir = images / part / seq
            seq_dir.mkdir(parents=True)
            for i in range(1, n_frames + 1):
                img = ImagePlane(rng.integers(0, 256, (48, 64)).astype(np.uint8))
                save_image(img, seq_dir / f"{part}_{seq}_{i:08d}.png")
            if code is not None:
                label_dir = labels / part / seq
                label_dir.mkdir(parents=True)
                (label_dir / f"{part}_{seq}_{n_frames:08d}_emotion.txt").write_text(
                    f"   {code:.7e}\n"
                )
    return images, labels


@pytest.fixture
def mini_tree(tmp_path):
    return write_ck_tree(
        tmp_path,
        {
            "S005": {"001": (3, 3)},
            "S010": {"001": (2, 7), "002": (4, None)},
            "S011": {"001": (2, 1)},
        },
    )


class TestScanCorpus:
    def test_only_labelled_sequences(self, mini_tree):
        corpus = scan_corpus(*mini_tree)
        assert len(corpus.sequences) == 3
        assert corpus.participants == ("S005", "S010", "S011")

    def test_emotion_code_mapping(self, mini_tree):
        corpus = scan_corpus(*mini_tree)
        by_part = {s.participant: s.emotion for s in corpus.sequences}
        assert by_part["S005"] == 2  # disgust
        assert by_part["S010"] == 6  # surprise
        assert by_part["S011"] == 0  # anger

    def test_missing_roots(self, tmp_path):
        with pytest.raises(IoError):
            scan_corpus(tmp_path / "nope", tmp_path)

    def test_neutral_code_skipped_with_warning(self, tmp_path):
        images, labels = write_ck_tree(tmp_path, {"S001": {"001": (2, 0), "002": (2, 5)}})
        report = ScanReport()
        corpus = scan_corpus(images, labels, report)
        assert len(corpus.sequences) == 1
        assert report.skipped == 1
        assert "0" in report.warnings[0]

    def test_unreadable_label_skipped(self, tmp_path):
        images, labels = write_ck_tree(tmp_path, {"S001": {"001": (2, 4)}})
        label_file = next((labels / "S001" / "001").glob("*emotion*"))
        label_file.write_text("not a number")
        report = ScanReport()
        corpus = scan_corpus(images, labels, report)
        assert corpus.sequences == ()
        assert report.skipped == 1

    def test_deterministic_ordering(self, mini_tree):
        a = scan_corpus(*mini_tree)
        b = scan_corpus(*mini_tree)
        assert a == b
        keys = [(s.participant, s.sequence) for s in a.sequences]
        assert keys == sorted(keys)


class TestPeakFrame:
    def test_last_frame_loaded(self, tmp_path):
        images, labels = write_ck_tree(tmp_path, {"S001": {"001": (10, 5)}})
        seq = scan_corpus(images, labels).sequences[0]
        assert seq.frames[-1].name.endswith("00000010.png")
        frame = peak_frame(seq)
        assert (frame.height, frame.width) == (48, 64)

    def test_single_frame(self, tmp_path):
        images, labels = write_ck_tree(tmp_path, {"S001": {"001": (1, 5)}})
        seq = scan_corpus(images, labels).sequences[0]
        assert peak_frame(seq) is not None

    def test_numeric_sort_beats_lexical(self, tmp_path):
        images, labels = write_ck_tree(tmp_path, {"S001": {"001": (2, 5)}})
        seq_dir = images / "S001" / "001"
        # a frame numbered 10 without zero padding sorts after 2 numerically
        rng = np.random.default_rng(0)
        save_image(
            ImagePlane(np.full((48, 64), 7, np.uint8)), seq_dir / "S001_001_10.png"
        )
        seq = scan_corpus(images, labels).sequences[0]
        assert seq.frames[-1].name == "S001_001_10.png"
        assert (peak_frame(seq).data == 7).all()


class TestDesignMatrix:
    def test_rows_match_sequences(self, mini_tree, bundle):
        corpus = scan_corpus(*mini_tree)
        dm = build_design_matrix(corpus, bundle, LayerTap.LAYER6, use_face_detection=False)
        assert dm.features.shape == (3, 4096)
        assert dm.participants == ("S005", "S010", "S011")
        assert list(dm.labels) == [2, 6, 0]
        assert dm.dropped == ()

    def test_label_distribution_preserved(self, mini_tree, bundle):
        corpus = scan_corpus(*mini_tree)
        dm = build_design_matrix(corpus, bundle, LayerTap.LAYER6, use_face_detection=False)
        assert sorted(dm.labels) == sorted(s.emotion for s in corpus.sequences)

    def test_cache_roundtrip_without_images(self, mini_tree, bundle, tmp_path):
        corpus = scan_corpus(*mini_tree)
        cache = tmp_path / "features.ntc"
        first = build_design_matrix(
            corpus, bundle, LayerTap.LAYER6, use_face_detection=False, cache_path=cache
        )
        assert cache.exists()
        # remove every frame: the second pass must come purely from the cache
        for seq in corpus.sequences:
            for frame in seq.frames:
                frame.unlink()
        second = build_design_matrix(
            corpus, bundle, LayerTap.LAYER6, use_face_detection=False, cache_path=cache
        )
        assert first.features.tobytes() == second.features.tobytes()
        assert first.labels.tolist() == second.labels.tolist()

    def test_extraction_failure_drops_row(self, mini_tree, bundle):
        corpus = scan_corpus(*mini_tree)
        for frame in corpus.sequences[0].frames:
            frame.unlink()
        dm = build_design_matrix(corpus, bundle, LayerTap.LAYER6, use_face_detection=False)
        assert dm.features.shape[0] == 2
        assert len(dm.dropped) == 1
        assert "S005/001" in dm.dropped[0]

    def test_face_detection_requires_cascade(self, mini_tree, bundle):
        corpus = scan_corpus(*mini_tree)
        with pytest.raises(IoError):
            build_design_matrix(corpus, bundle, LayerTap.LAYER6, use_face_detection=True)

    def test_face_detection_falls_back_to_full_frame(self, mini_tree, bundle, cascade, caplog):
        # the synthetic frames hold no faces: every row comes from the
        # logged full-frame fallback rather than being dropped
        corpus = scan_corpus(*mini_tree)
        with caplog.at_level("WARNING"):
            dm = build_design_matrix(
                corpus, bundle, LayerTap.LAYER6, use_face_detection=True, cascade=cascade
            )
        assert dm.features.shape == (3, 4096)
        assert dm.dropped == ()
