"""
Output records: flatten simulation results into tables, render them as
plain text, and write them as delimited files and a JSON summary.

Files are written atomically (to a temporary name, then renamed). Wall-clock
timings only go to timings.csv, so every other file is reproducible for a
given scenario and seed.
"""

import io
import os
import os.path
import csv
import json
import logging
from fractions import Fraction

from .auction import Bid
from .utils import format_money, format_number, to_money, ModelError

LOG = logging.getLogger(__name__)


FRAME_COLUMNS = ('frame', 'solver', 'bids', 'served', 'served_ratio', 'revenue',
                 'electricity_cost', 'lost_revenue', 'profit', 'heuristic_profit',
                 'exact_profit', 'exact_optimal', 'dropped')
PRICE_COLUMNS = ('frame', 'ap', 'vm_type', 'unit_cost', 'served_count',
                 'local_price', 'served', 'dropped')
SLOT_COLUMNS = ('frame', 'slot', 'flows', 'objective', 'iterations', 'converged',
                'stationarity', 'feasibility', 'slackness')
LINK_COLUMNS = ('frame', 'slot', 'link', 'utilization')
ALLOCATION_COLUMNS = ('frame', 'slot', 'bid', 'cloudlet', 'load', 'rate', 'links', 'binding')
TIMING_COLUMNS = ('frame', 'phase', 'seconds')
SOLUTION_COLUMNS = ('bid', 'ap', 'vm_type', 'cloudlet', 'tier', 'pm_type',
                    'pm_index', 'price_paid')
BID_COLUMNS = ('id', 'ap', 'vm_type', 'price')


# ----------------------------------------------------------------------

def format_value(v):
    """
    Locale-independent text for a table cell
    """
    if v is None:
        return ''
    if isinstance(v, bool):
        return 'true' if v else 'false'
    if isinstance(v, Fraction):
        return format_money(v)
    if isinstance(v, float):
        return format_number(v)
    return str(v)


def text_table(rows, columns, limit=None):
    """
    Render records as an aligned plain-text table
      @param rows (list): dicts
      @param columns (list): column names, in output order
      @param limit (int): maximum number of rows shown
    """
    shown = rows if limit is None else rows[:limit]
    cells = [[format_value(r.get(c)) for c in columns] for r in shown]
    widths = [max([len(c)] + [len(row[i]) for row in cells])
              for i, c in enumerate(columns)]
    lines = ['  '.join(c.ljust(w) for c, w in zip(columns, widths)),
             '  '.join('-' * w for w in widths)]
    lines += ['  '.join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    if limit is not None and len(rows) > limit:
        lines.append('... ({} more rows)'.format(len(rows) - limit))
    return '\n'.join(lines)


def _atomic(path):
    return path + '-new'


def write_table(path, rows, columns):
    """
    Write records as a comma-separated file with a header row
    """
    tmp = _atomic(path)
    with io.open(tmp, 'wt', encoding='utf-8', newline='') as f:
        out = csv.writer(f, lineterminator='\n')
        out.writerow(columns)
        for r in rows:
            out.writerow([format_value(r.get(c)) for c in columns])
    os.replace(tmp, path)
    LOG.debug('written %d rows to %s', len(rows), path)
    return path


def write_json(path, doc):
    tmp = _atomic(path)
    with io.open(tmp, 'wt', encoding='utf-8') as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write('\n')
    os.replace(tmp, path)
    return path


def read_table(path):
    with io.open(path, 'rt', encoding='utf-8', newline='') as f:
        return list(csv.DictReader(f))


# ----------------------------------------------------------------------

def read_bids(path):
    """
    Read a bid file: columns id, ap, vm_type, price
      @return (list): Bid objects, prices on the money grid
    """
    bids = []
    for n, row in enumerate(read_table(path), 2):
        try:
            bids.append(Bid(int(row['id']), row['ap'].strip(), row['vm_type'].strip(),
                            to_money(row['price'])))
        except (KeyError, ValueError, ArithmeticError, AttributeError):
            raise ModelError("invalid bid in '{}' line {}: {}", path, n, row)
    return bids


def write_bids(path, bids):
    return write_table(path, [{'id': b.id, 'ap': b.ap, 'vm_type': b.vm_type,
                               'price': b.price} for b in bids], BID_COLUMNS)


# ----------------------------------------------------------------------

def frame_rows(frames):
    rows = []
    for f in frames:
        rows.append({'frame': f.frame, 'solver': f.solver, 'bids': f.bids,
                     'served': f.served, 'served_ratio': f.served_ratio,
                     'revenue': f.revenue, 'electricity_cost': f.electricity_cost,
                     'lost_revenue': f.lost_revenue, 'profit': f.profit,
                     'heuristic_profit': f.heuristic_profit,
                     'exact_profit': f.exact_profit,
                     'exact_optimal': f.exact_optimal, 'dropped': f.dropped})
    return rows


def price_rows(frames):
    return [dict(p, frame=f.frame) for f in frames for p in f.prices]


def timing_rows(frames):
    return [{'frame': f.frame, 'phase': k, 'seconds': v}
            for f in frames for k, v in sorted(f.timings.items())]


def slot_rows(slots):
    return [{'frame': s.frame, 'slot': s.slot, 'flows': s.flows,
             'objective': s.objective, 'iterations': s.iterations,
             'converged': s.converged, 'stationarity': s.stationarity,
             'feasibility': s.feasibility, 'slackness': s.slackness}
            for s in slots]


def link_rows(slots):
    return [{'frame': s.frame, 'slot': s.slot, 'link': m, 'utilization': u}
            for s in slots for m, u in s.utilization.items()]


def allocation_rows(slots):
    return [dict(a, frame=s.frame) for s in slots for a in s.allocations]


def summary(result, manifest=None):
    """
    A machine-readable summary of a run: totals and per-frame means
    """
    frames = result.frames
    total = sum((f.profit for f in frames), Fraction(0))
    bids = sum(f.bids for f in frames)
    served = sum(f.served for f in frames)
    doc = {
        'frames': len(frames),
        'slots': len(result.slots),
        'bids': bids,
        'served': served,
        'served_ratio': served / bids if bids else 0.0,
        'revenue': format_money(sum((f.revenue for f in frames), Fraction(0))),
        'electricity_cost': format_money(sum((f.electricity_cost for f in frames), Fraction(0))),
        'lost_revenue': format_money(sum((f.lost_revenue for f in frames), Fraction(0))),
        'profit': format_money(total),
        'slots_not_converged': sum(1 for s in result.slots if not s.converged),
        'bandwidth_objective': sum(s.objective for s in result.slots),
    }
    if manifest is not None:
        doc['manifest'] = manifest.as_dict()
    return doc


def write_simulation(outdir, result, manifest=None):
    """
    Write all the record files of a simulation run
      @return (list): the written paths
    """
    os.makedirs(outdir, exist_ok=True)
    p = lambda name: os.path.join(outdir, name)
    written = [write_table(p('frames.csv'), frame_rows(result.frames), FRAME_COLUMNS),
               write_table(p('prices.csv'), price_rows(result.frames), PRICE_COLUMNS),
               write_table(p('timings.csv'), timing_rows(result.frames), TIMING_COLUMNS)]
    if result.slots:
        written += [write_table(p('slots.csv'), slot_rows(result.slots), SLOT_COLUMNS),
                    write_table(p('links.csv'), link_rows(result.slots), LINK_COLUMNS),
                    write_table(p('allocations.csv'), allocation_rows(result.slots),
                                ALLOCATION_COLUMNS)]
    written.append(write_json(p('summary.json'), summary(result, manifest)))
    LOG.info('%d record files written to %s', len(written), outdir)
    return written
