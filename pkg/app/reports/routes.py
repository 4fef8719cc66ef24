import json
import os

from flask import abort, current_app, jsonify, request

from app.reports import reports
from app.utils import read_jsonl


def _output_dir():
    return os.path.abspath(current_app.config['OUTPUT_DIR'])


def _run_dir(run):
    """Directory of a saved run, refusing anything outside the output directory."""
    root = _output_dir()
    path = os.path.abspath(os.path.join(root, run))
    if os.path.commonpath([root, path]) != root or not os.path.isfile(os.path.join(path, 'report.json')):
        abort(404)
    return path


def _saved_runs():
    root = _output_dir()
    runs = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        if 'report.json' in filenames:
            runs.append(os.path.relpath(dirpath, root).replace(os.sep, '/'))
    return sorted(runs)


@reports.route('/')
def index():
    """
    Saved runs under the output directory, optionally filtered by variant.
    """
    variant = request.args.get('variant', '')
    listing = []
    for run in _saved_runs():
        with open(os.path.join(_output_dir(), run, 'report.json')) as fh:
            report = json.load(fh)
        if variant and report.get('variant') != variant:
            continue
        listing.append({
            'run': run,
            'variant': report.get('variant'),
            'seed': report.get('seed'),
            'service_rate': report.get('service_rate'),
            'epochs': report.get('epochs'),
        })
    return jsonify(listing)


@reports.route('/<path:run>/epochs')
def epochs(run):
    path = _run_dir(run)
    offset = request.args.get('offset', 0, type=int)
    limit = request.args.get('limit', 100, type=int)
    if offset < 0 or limit < 0:
        return jsonify({'error': 'offset and limit must be >= 0'}), 400
    records = read_jsonl(os.path.join(path, 'epochs.jsonl'))
    return jsonify({'run': run, 'total': len(records), 'epochs': records[offset:offset + limit]})


@reports.route('/<path:run>')
def detail(run):
    path = _run_dir(run)
    with open(os.path.join(path, 'report.json')) as fh:
        return jsonify(json.load(fh))
