"""Command-line front door: batch feature extraction, detection, training,
evaluation, the experiment grid, single-image classification, and the
real-time service.

Exit codes: 0 ok, 1 internal error, 2 input error, 3 missing dataset.
"""

from __future__ import annotations

import base64
import functools
import sys
from importlib import resources
from pathlib import Path

import click
import numpy as np

from .convnet import LayerTap, extract_features
from .dataset import build_design_matrix, scan_corpus
from .engine import EmotionEngine, LIVE_PARAMS
from .errors import FacemoodError
from .evaluator import (
    DEFAULT_C_GRID,
    ExperimentSpec,
    macro_accuracy,
    make_folds,
    run_experiment_grid,
    run_loso,
)
from .facedetect import DetectParams, detect as detect_faces, parse_cascade
from .image import load_image
from .svm import (
    EMOTIONS,
    Strategy,
    SvmConfig,
    TrainingSet,
    load_model,
    predict,
    save_model,
    train_multiclass,
)
from .tensorio import Tensor, load_bundle, write_tensors

TAPS = {5: LayerTap.LAYER5, 6: LayerTap.LAYER6}
STRATEGIES = {"ovo": Strategy.ONE_VS_ONE, "ova": Strategy.ONE_VS_ALL}


def bundled_cascade_path() -> Path:
    return Path(resources.files("facemood").joinpath("data/cascade_frontal.xml"))


def handles_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FacemoodError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except click.ClickException:
            raise
        except Exception as exc:  # noqa: BLE001
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def corpus_or_exit(images_root: str, labels_root: str):
    if not Path(images_root).is_dir() or not Path(labels_root).is_dir():
        click.echo(f"dataset not found under {images_root} / {labels_root}", err=True)
        sys.exit(3)
    return scan_corpus(images_root, labels_root)


cascade_option = click.option(
    "--cascade", type=click.Path(exists=True, dir_okay=False), default=None,
    help="Cascade XML (defaults to the bundled frontal-face cascade).",
)
tap_option = click.option("--tap", type=click.Choice(["5", "6"]), default="5", show_default=True)


def resolve_cascade(path):
    return parse_cascade(path if path is not None else bundled_cascade_path())


@click.group()
def main():
    """Facial-expression recognition engine and affective game service."""


@main.command()
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@cascade_option
@tap_option
@click.option("--face-detection/--no-face-detection", default=True, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None,
              help="Write the feature vector as an NTC1 container.")
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@handles_errors
def extract(weights, cascade, tap, face_detection, output, image):
    """Extract layer features from one image."""
    bundle = load_bundle(weights)
    img = load_image(image)
    if face_detection:
        from .facedetect import crop_largest_face
        from .image import grayscale

        face = crop_largest_face(grayscale(img), resolve_cascade(cascade), DetectParams())
        if face is not None:
            img = face
        else:
            click.echo("no face detected; using the full frame", err=True)
    vec = extract_features(img, bundle, TAPS[int(tap)])
    click.echo(f"tap {tap}: {vec.values.shape[0]} values")
    if output:
        write_tensors({"features": Tensor("features", vec.values)}, output)
        click.echo(f"wrote {output}")


@main.command()
@cascade_option
@click.option("--scale", type=float, default=1.3, show_default=True)
@click.option("--min-neighbors", type=int, default=3, show_default=True)
@click.option("--min-size", type=int, default=150, show_default=True)
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@handles_errors
def detect(cascade, scale, min_neighbors, min_size, image):
    """Detect faces; prints one box per line as `x y side`."""
    boxes = detect_faces(
        load_image(image),
        resolve_cascade(cascade),
        DetectParams(scale_factor=scale, min_neighbors=min_neighbors, min_size=min_size),
    )
    for box in boxes:
        click.echo(f"{box.x} {box.y} {box.side}")


def _corpus_matrix(images_root, labels_root, weights, cascade, tap, face_detection, cache):
    corpus = corpus_or_exit(images_root, labels_root)
    bundle = load_bundle(weights)
    return build_design_matrix(
        corpus,
        bundle,
        TAPS[int(tap)],
        use_face_detection=face_detection,
        cascade=resolve_cascade(cascade) if face_detection else None,
        params=DetectParams(),
        cache_path=cache,
    )


@main.command()
@click.option("--images-root", required=True)
@click.option("--labels-root", required=True)
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@cascade_option
@tap_option
@click.option("--strategy", type=click.Choice(["ovo", "ova"]), default="ovo", show_default=True)
@click.option("--c", type=float, default=1e-6, show_default=True)
@click.option("--weighted/--no-weighted", default=True, show_default=True)
@click.option("--face-detection/--no-face-detection", default=True, show_default=True)
@click.option("--cache", type=click.Path(dir_okay=False), default=None)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@handles_errors
def train(images_root, labels_root, weights, cascade, tap, strategy, c, weighted,
          face_detection, cache, output):
    """Train a multiclass SVM on a corpus and save it as NTC1."""
    dm = _corpus_matrix(images_root, labels_root, weights, cascade, tap, face_detection, cache)
    ts = TrainingSet(dm.features, dm.labels)
    model = train_multiclass(ts, SvmConfig(c=c, strategy=STRATEGIES[strategy], weighted=weighted))
    save_model(model, output)
    click.echo(f"trained {strategy} model on {dm.features.shape[0]} rows -> {output}")


@main.command("eval")
@click.option("--images-root", required=True)
@click.option("--labels-root", required=True)
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@cascade_option
@tap_option
@click.option("--strategy", type=click.Choice(["ovo", "ova"]), default="ovo", show_default=True)
@click.option("--c", type=float, default=1e-6, show_default=True)
@click.option("--weighted/--no-weighted", default=True, show_default=True)
@click.option("--face-detection/--no-face-detection", default=True, show_default=True)
@click.option("--cache", type=click.Path(dir_okay=False), default=None)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None,
              help="Write the confusion matrix as CSV.")
@handles_errors
def eval_cmd(images_root, labels_root, weights, cascade, tap, strategy, c, weighted,
             face_detection, cache, output):
    """Leave-one-participant-out evaluation on a corpus."""
    dm = _corpus_matrix(images_root, labels_root, weights, cascade, tap, face_detection, cache)
    plan = make_folds(list(dm.participants))
    cm = run_loso(
        dm.features, dm.labels, plan,
        SvmConfig(c=c, strategy=STRATEGIES[strategy], weighted=weighted),
    )
    click.echo(f"macro accuracy: {macro_accuracy(cm):.1f}")
    if output:
        Path(output).write_text(cm.to_csv())
        click.echo(f"wrote {output}")


@main.command()
@click.option("--images-root", required=True)
@click.option("--labels-root", required=True)
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@cascade_option
@click.option("--taps", default="5,6", show_default=True)
@click.option("--strategies", default="ovo,ova", show_default=True)
@click.option("--c-grid", default=",".join(f"{c:g}" for c in DEFAULT_C_GRID), show_default=True)
@click.option("--face-detection", type=click.Choice(["on", "off", "both"]), default="both",
              show_default=True)
@click.option("--weighted/--no-weighted", default=True, show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@handles_errors
def grid(images_root, labels_root, weights, cascade, taps, strategies, c_grid,
         face_detection, weighted, cache_dir, output):
    """Run the full experiment grid and write one CSV row per combination."""
    corpus = corpus_or_exit(images_root, labels_root)
    bundle = load_bundle(weights)
    tap_list = [TAPS[int(t)] for t in taps.split(",")]
    strategy_list = [STRATEGIES[s] for s in strategies.split(",")]
    c_values = tuple(float(c) for c in c_grid.split(","))
    fd_values = {"on": (True,), "off": (False,), "both": (True, False)}[face_detection]

    if cache_dir:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
    sources = {}
    for tap in tap_list:
        for fd in fd_values:
            cache = (
                Path(cache_dir) / f"features_tap{tap.value}_fd{int(fd)}.ntc"
                if cache_dir else None
            )
            dm = build_design_matrix(
                corpus, bundle, tap,
                use_face_detection=fd,
                cascade=resolve_cascade(cascade) if fd else None,
                params=DetectParams(),
                cache_path=cache,
            )
            sources[(tap, fd)] = (dm.features, dm.labels, list(dm.participants))
    specs = [
        ExperimentSpec(tap, strategy, c_values, weighted=weighted, face_detection=fd)
        for tap in tap_list for strategy in strategy_list for fd in fd_values
    ]
    Path(output).write_text(run_experiment_grid(specs, sources))
    click.echo(f"wrote {output}")


@main.command()
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), default=None)
@cascade_option
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), default=None)
@tap_option
@click.option("--face-detection/--no-face-detection", default=True, show_default=True)
@click.option("--server", default=None, help="Send the image to a running service instead.")
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@handles_errors
def classify(weights, cascade, model_path, tap, face_detection, server, image):
    """Classify one image; prints the emotion name and per-label scores."""
    if server:
        import httpx

        payload = base64.b64encode(Path(image).read_bytes()).decode()
        fmt = "jpeg" if Path(image).suffix.lower() in (".jpg", ".jpeg") else "png"
        response = httpx.post(
            f"{server.rstrip('/')}/classify",
            json={"image_b64": payload, "format": fmt},
            timeout=60.0,
        )
        response.raise_for_status()
        body = response.json()
        if body.get("emotion") is None:
            click.echo("no face detected", err=True)
            sys.exit(2)
        click.echo(body["emotion"])
        for name in EMOTIONS:
            if body["scores"] and name in body["scores"]:
                click.echo(f"{name}: {body['scores'][name]:g}")
        return

    if not weights or not model_path:
        raise click.UsageError("--weights and --model are required without --server")
    bundle = load_bundle(weights)
    model = load_model(model_path)
    img = load_image(image)
    from .image import grayscale

    img = grayscale(img)
    if face_detection:
        from .facedetect import crop_largest_face

        face = crop_largest_face(img, resolve_cascade(cascade), DetectParams())
        if face is None:
            click.echo("no face detected", err=True)
            sys.exit(2)
        img = face
    vec = extract_features(img, bundle, TAPS[int(tap)])
    label, detail = predict(model, vec.values)
    click.echo(EMOTIONS[label])
    for l in sorted(detail.label_scores):
        click.echo(f"{EMOTIONS[l]}: {detail.label_scores[l]:g}")


@main.command()
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@cascade_option
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@tap_option
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8400, show_default=True)
@click.option("--static", type=click.Path(file_okay=False), default=None,
              help="Serve a built frontend from this directory.")
@handles_errors
def serve(weights, cascade, model_path, tap, host, port, static):
    """Run the real-time classification service."""
    from .service import serve as run_service

    engine = EmotionEngine(
        bundle=load_bundle(weights),
        cascade=resolve_cascade(cascade),
        model=load_model(model_path),
        params=LIVE_PARAMS,
        tap=TAPS[int(tap)],
    )
    run_service(engine, host=host, port=port, static_dir=static)


if __name__ == "__main__":
    main()
