import argparse
import glob
import logging
import os
import sys

from src.ast_model import export_attention
from src.ast_model import write_attention
from src.config import config_schema
from src.config import dump_config
from src.config import load_config
from src.corpus import AnnotationTrack
from src.corpus import load_wav
from src.corpus import preprocess
from src.corpus import read_annotations
from src.corpus import split_recording
from src.crossval import SearchSpace
from src.crossval import make_folds
from src.crossval import nested_cv
from src.crossval import read_plan
from src.crossval import write_plan
from src.crossval import write_search
from src.dataset import build_dataset
from src.errors import MissingInputError
from src.errors import ShapeError
from src.errors import TrunklineError
from src.errors import UnsupportedCombinationError
from src.estimators import NEURAL
from src.estimators import TRANSFORMERS
from src.estimators import load_classifier
from src.estimators import make_classifier
from src.estimators import save_classifier
from src.features import extract_features
from src.features import save_features
from src.helpers import derive_seed
from src.labels import NO_CALL
from src.labels import segment_targets
from src.labels import write_frame_labels
from src.metrics import detection_report
from src.metrics import segment_report
from src.metrics import write_curves
from src.metrics import write_report
from src.pipeline import classify_segments
from src.pipeline import detect
from src.pipeline import endpoint
from src.pipeline import oracle_segments
from src.serialization import atomic_write
from src.synthesis import synthesize_corpus
from src.synthesis import write_corpus
from src.tracks import read_segments
from src.tracks import read_tracks
from src.tracks import write_segments
from src.tracks import write_tracks
from src.training import write_history

logger = logging.getLogger('src.cli')

COMMANDS = ('synth', 'featurize', 'train', 'detect', 'endpoint', 'classify', 'evaluate', 'crossval', 'attention',
            'schema')


def configure_logging(out_dir=None, verbose=False):
    """stderr without timestamps; run.log in the output directory with them."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
    root.addHandler(console)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        sidecar = logging.FileHandler(os.path.join(out_dir, 'run.log'), mode='w')
        sidecar.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
        root.addHandler(sidecar)


def load_corpus(cfg):
    """Preprocessed recordings and their annotation tracks, from disk or synthesized."""
    if cfg.synth is not None:
        raw, tracks = synthesize_corpus(cfg.synth.spec(), cfg.show_progress)
        return [ preprocess(r) for r in raw ], { t.recording_id: t for t in tracks }
    paths = sorted(glob.glob(os.path.join(cfg.data.audio_dir, '*.wav')))
    if not paths:
        raise MissingInputError('no WAV files in %s' % cfg.data.audio_dir)
    annotations = read_annotations(cfg.data.annotations)
    recordings, tracks = [], {}
    for path in paths:
        rec = preprocess(load_wav(path), cfg.data.channel_policy)
        ann = annotations.get(rec.id, AnnotationTrack(rec.id, []))
        for piece, piece_ann in split_recording(rec, ann, cfg.data.max_len):
            recordings.append(piece)
            tracks[piece.id] = piece_ann
    unknown = sorted(set(annotations) - { os.path.splitext(os.path.basename(p))[0] for p in paths })
    if unknown:
        logger.warning('annotations for missing recordings ignored: %s', ', '.join(unknown))
    return recordings, tracks


def load_dataset(cfg, min_count=None):
    recordings, tracks = load_corpus(cfg)
    return build_dataset(recordings, tracks, cfg.task, grid=cfg.label_grid(), cache_dir=cfg.cache_dir,
                         min_count=min_count)


def load_model(cfg):
    if cfg.model.path is None:
        raise MissingInputError('model.path is not set')
    if not os.path.isfile(cfg.model.path):
        raise MissingInputError('model file %s does not exist' % cfg.model.path)
    return load_classifier(cfg.model.path)


def run_synth(cfg, args):
    spec = cfg.synth.spec() if cfg.synth is not None else None
    if spec is None:
        raise MissingInputError('synth needs synthetic corpus settings, not a data source')
    recordings, tracks = synthesize_corpus(spec, cfg.show_progress)
    write_corpus(args.out, spec, recordings, tracks)


def run_featurize(cfg, args):
    dataset = load_dataset(cfg)
    feature_cfg = cfg.feature_config()
    directory = os.path.join(args.out, 'features')
    os.makedirs(directory, exist_ok=True)
    dataset.prefetch(feature_cfg, show_progress=cfg.show_progress)
    for i in dataset.ids:
        save_features(os.path.join(directory, '%s.efm' % i), dataset.features(i, feature_cfg))
    write_frame_labels(os.path.join(args.out, 'labels.csv'), [ dataset[i].labels for i in dataset.ids ])


def run_train(cfg, args):
    dataset = load_dataset(cfg)
    feature_cfg = cfg.feature_config()
    model = make_classifier(cfg.model.family, dataset.classes, feature_cfg, cfg.model.params,
                            derive_seed(cfg.seed, 'train'))
    dataset.prefetch(feature_cfg, show_progress=cfg.show_progress)
    model.fit(dataset.pairs(dataset.ids, feature_cfg))
    save_classifier(os.path.join(args.out, 'model.emd'), model)
    if cfg.model.family in NEURAL and model.history is not None:
        write_history(os.path.join(args.out, 'loss_history.csv'), model.history)


def run_detect(cfg, args):
    model = load_model(cfg)
    recordings, _ = load_corpus(cfg)
    tracks = []
    for rec in recordings:
        tracks.append(detect(model, extract_features(rec, model.feature_cfg), cfg.detection_config(), rec.duration))
    write_tracks(os.path.join(args.out, 'tracks.csv'), tracks)


def run_attention(cfg, args):
    model = load_model(cfg)
    if model.family not in TRANSFORMERS:
        raise UnsupportedCombinationError('attention export needs a transformer model, got %s' % model.family)
    recordings, _ = load_corpus(cfg)
    directory = os.path.join(args.out, 'attention')
    for rec in recordings:
        x, start = model.attention_window(extract_features(rec, model.feature_cfg), args.at)
        weights = export_attention(model.net, x)
        write_attention(os.path.join(directory, '%s.csv' % rec.id), weights)
        logger.info('%s: attention of %d layers and %d heads over %d frames from %.2f s',
                    rec.id, weights.shape[0], weights.shape[1], x.shape[1], start)


def run_endpoint(cfg, args):
    path = args.tracks or os.path.join(args.out, 'tracks.csv')
    if not os.path.isfile(path):
        raise MissingInputError('track file %s does not exist' % path)
    d = cfg.detection
    segments = []
    for rec_id, track in read_tracks(path).items():
        for c in track.classes:
            if c != NO_CALL:
                segments += endpoint(track, c, d.threshold, d.min_gap, d.min_duration)
    segments.sort(key=lambda s: (s.recording_id, s.start, s.label))
    write_segments(os.path.join(args.out, 'segments.csv'), segments)


def _input_segments(args, tracks):
    """Segments per recording: from --segments, or the annotated events."""
    if args.segments is None:
        return { rec_id: oracle_segments(t) for rec_id, t in tracks.items() }
    if not os.path.isfile(args.segments):
        raise MissingInputError('segment file %s does not exist' % args.segments)
    by_recording = {}
    for s in read_segments(args.segments):
        by_recording.setdefault(s.recording_id, []).append(s)
    return by_recording


def run_classify(cfg, args):
    model = load_model(cfg)
    dataset = load_dataset(cfg)
    segments = _input_segments(args, { i: dataset[i].annotations for i in dataset.ids })
    classified = []
    for rec in [ dataset[i].recording for i in dataset.ids ]:
        if segments.get(rec.id):
            classified += classify_segments(model, extract_features(rec, model.feature_cfg), segments[rec.id],
                                            cfg.detection_config(), rec.duration)
    write_segments(os.path.join(args.out, 'classified.csv'), classified)


def _source_event(track, segment):
    for e in track.events:
        if abs(e.start - segment.start) < 1.0e-6 and abs(e.end - segment.end) < 1.0e-6:
            return e
    return None


def run_evaluate(cfg, args):
    if args.tracks is None and args.segments is None:
        raise MissingInputError('evaluate needs --tracks or --segments')
    dataset = load_dataset(cfg)
    report = None
    if args.tracks is not None:
        if not os.path.isfile(args.tracks):
            raise MissingInputError('track file %s does not exist' % args.tracks)
        tracks = read_tracks(args.tracks)
        missing = sorted(set(tracks) - set(dataset.ids))
        if missing:
            raise ShapeError('tracks for recordings without labels: %s' % ', '.join(missing))
        pairs = [ (dataset[i].labels, tracks[i]) for i in dataset.ids if i in tracks ]
        report = detection_report(pairs, cfg.detection.threshold, cfg.detection.tolerance)
    if args.segments is not None:
        if not os.path.isfile(args.segments):
            raise MissingInputError('segment file %s does not exist' % args.segments)
        classified = [ s for s in read_segments(args.segments) if s.probabilities is not None ]
        targets = []
        for s in classified:
            track = dataset[s.recording_id].annotations
            targets.append(segment_targets(track, s.start, s.end, list(s.classes), _source_event(track, s)))
        seg = segment_report(targets, classified, cfg.detection.threshold)
        if report is None:
            report = seg
        else:
            report.per_class.update(seg.per_class)
            report.macro.update(seg.macro)
            report.excluded.update(seg.excluded)
            report.curves.update(seg.curves)
    write_report(os.path.join(args.out, 'report.json'), report)
    write_curves(os.path.join(args.out, 'curves'), report)


def run_crossval(cfg, args):
    dataset = load_dataset(cfg, min_count=cfg.cv.folds)
    if cfg.cv.plan is not None:
        plan = read_plan(cfg.cv.plan)
    else:
        plan = make_folds(dataset.tracks(), cfg.cv.folds, derive_seed(cfg.seed, 'folds'), dataset.classes)
    write_plan(os.path.join(args.out, 'folds.json'), plan)
    grid = { name: [value] for name, value in cfg.model.params.items() }
    grid.update(cfg.model.search)
    feature_cfg = cfg.feature_config()
    dataset.prefetch(feature_cfg, show_progress=cfg.show_progress)
    result = nested_cv(plan, SearchSpace(grid), cfg.model.family, dataset, feature_cfg, derive_seed(cfg.seed, 'cv'),
                       cfg.detection_config(), cfg.detection.tolerance, cfg.show_progress)
    write_search(os.path.join(args.out, 'search.csv'), result)
    for fold in result.folds:
        directory = os.path.join(args.out, 'fold_%d' % fold.fold)
        write_report(os.path.join(directory, 'report.json'), fold.report)
        write_curves(os.path.join(directory, 'curves'), fold.report)
    write_report(os.path.join(args.out, 'aggregate.json'), result.aggregate)


def run_schema(cfg, args):
    text = config_schema()
    if args.out is None:
        sys.stdout.write(text)
        return
    with atomic_write(os.path.join(args.out, 'config.schema.json'), 'w') as handle:
        handle.write(text)


RUNNERS = { 'synth': run_synth, 'featurize': run_featurize, 'train': run_train, 'detect': run_detect,
            'endpoint': run_endpoint, 'classify': run_classify, 'evaluate': run_evaluate,
            'crossval': run_crossval, 'attention': run_attention, 'schema': run_schema }


def parser():
    p = argparse.ArgumentParser(prog='trunkline', description='Elephant call detection and classification.')
    p.add_argument('command', choices=COMMANDS)
    p.add_argument('--config', help='JSON run configuration')
    p.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                   help='override a configuration entry, e.g. model.params.l2=0.001')
    p.add_argument('--seed', type=int, help='root seed (also the synthetic corpus seed)')
    p.add_argument('--out', help='output directory')
    p.add_argument('--tracks', help='framewise probability CSV (endpoint, evaluate)')
    p.add_argument('--segments', help='segment CSV (classify, evaluate)')
    p.add_argument('--at', type=float, help='centre in seconds of the attention window (attention)')
    p.add_argument('--verbose', action='store_true')
    return p


def main(argv=None):
    args = parser().parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides += [ 'seed=%d' % args.seed ]
            if args.command == 'synth':
                overrides += [ 'synth.seed=%d' % args.seed ]
        cfg = load_config(args.config, overrides)
        if args.command != 'schema' and args.out is None:
            raise MissingInputError('--out is required for %s' % args.command)
        configure_logging(args.out if args.command != 'schema' else None, args.verbose)
        if args.out is not None and args.command != 'synth':
            with atomic_write(os.path.join(args.out, 'config.json'), 'w') as handle:
                handle.write(dump_config(cfg))
        RUNNERS[args.command](cfg, args)
    # 2 for validation errors, 3 for runtime failures
    except TrunklineError as e:
        sys.stderr.write('error: %s\n' % e.one_line())
        return e.exit_code
    except Exception as e:
        logger.debug('unexpected failure', exc_info=True)
        sys.stderr.write('error: RUNTIME: %s\n' % ' '.join(str(e).split()))
        return 3
    return 0


if __name__ == '__main__':
    sys.exit(main())
