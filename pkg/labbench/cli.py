"""
The labbench command.

    labbench serve --config bench_config.json [--port N]
    labbench list --host H --port P
    labbench reference --config <file> --points 10000 --out ref.csv
    labbench sweep --host H --port P --mode uniform|gwass --points 100 --out run.csv
    labbench metrics --run run.csv --ref ref.csv --out report.json
    labbench noise --host H --port P --reads 100000 --out noise.json
    labbench study --config <file> --seeds 1-20 -n 4 --out study.json

Exit status is 0 on success, 2 on invalid input and 1 on runtime failures.
"""
# Built-in libraries
import argparse
import json
import logging
import sys
import time
# Local libraries
import labbench
import labbench.input as lb_prms
from labbench.client import LocalSession, connect, list_instruments
from labbench.config import load_config, resolve_port
from labbench.exceptions import LabbenchError
from labbench.harness import (ExperimentConfig, characterize_noise, compute_metrics,
                              metrics_to_json, read_csv, run_reference, run_study,
                              run_sweep)
from labbench.instruments import Bench, Kind
from labbench.server import serve

# Module logger
log = logging.getLogger(__name__)


def parse_seeds(text):
    """'1-20' or '1,4,9' -> list of int"""
    seeds = []
    for part in text.split(','):
        part = part.strip()
        if '-' in part:
            lo, hi = part.split('-',1)
            seeds.extend(range(int(lo),int(hi)+1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ValueError(f'no seeds in {text!r}')
    return seeds


def _add_bridge(parser):
    parser.add_argument('--host',default=lb_prms.host,help='bridge host')
    parser.add_argument('--port',type=int,default=None,
                        help=f'bridge port (default: ${lb_prms.port_env} or the config port)')
    parser.add_argument('--config',default=None,help='bench configuration JSON')


def _add_family(parser):
    parser.add_argument('--vbias-lo',type=float,default=lb_prms.vbias_lo)
    parser.add_argument('--vbias-hi',type=float,default=lb_prms.vbias_hi)
    parser.add_argument('--vbias-count',type=int,default=lb_prms.vbias_count)
    parser.add_argument('--vdd',type=float,default=lb_prms.vdd,help='supply voltage in V')


def get_args(argv=None, parse=True):
    parser = argparse.ArgumentParser(prog='labbench',description='virtual bench and sweep harness')
    parser.add_argument('--version',action='version',version=labbench.__version__)
    parser.add_argument('-debug',action='store_true',help='log at DEBUG level')
    sub = parser.add_subparsers(dest='command',required=True)

    p = sub.add_parser('serve',help='run the bridge server')
    p.add_argument('--config',default=None,help='bench configuration JSON')
    p.add_argument('--host',default='',help='interface to bind (default: all)')
    p.add_argument('--port',type=int,default=None)

    p = sub.add_parser('list',help='list the instruments behind a bridge')
    _add_bridge(p)

    p = sub.add_parser('reference',help='dense noiseless curves solved on the model')
    p.add_argument('--config',default=None,help='bench configuration JSON')
    p.add_argument('--points',type=int,default=lb_prms.reference_points)
    _add_family(p)
    p.add_argument('--out',required=True)

    p = sub.add_parser('sweep',help='measure the curve family through the instruments')
    _add_bridge(p)
    p.add_argument('--direct',action='store_true',help='use an in-process bench instead of TCP')
    p.add_argument('--mode',choices=['uniform','gwass'],default='uniform')
    p.add_argument('--points',type=int,default=lb_prms.points,help='samples per curve')
    p.add_argument('--coarse-frac',type=float,default=lb_prms.coarse_fraction)
    p.add_argument('--epsilon',type=float,default=lb_prms.epsilon)
    p.add_argument('--allocation',choices=['multinomial','largest_remainder'],
                   default=lb_prms.allocation)
    p.add_argument('--seed',type=int,default=lb_prms.seed)
    p.add_argument('--ilimit',type=float,default=lb_prms.current_limit,help='current limit in A')
    p.add_argument('--psu',default=None,help='supply serial or model')
    p.add_argument('--dmm',default=None,help='meter serial or model')
    _add_family(p)
    p.add_argument('--out',required=True)

    p = sub.add_parser('metrics',help='score a run against a reference')
    p.add_argument('--run',required=True)
    p.add_argument('--ref',required=True)
    p.add_argument('--out',default=None)

    p = sub.add_parser('noise',help='characterise the meter noise')
    _add_bridge(p)
    p.add_argument('--direct',action='store_true')
    p.add_argument('--dmm',default=None,help='meter serial or model')
    p.add_argument('--reads',type=int,default=lb_prms.noise_reads)
    p.add_argument('--out',default=None)

    p = sub.add_parser('study',help='uniform vs GWASS over a set of seeds')
    p.add_argument('--config',default=None,help='bench configuration JSON')
    p.add_argument('--seeds',type=parse_seeds,default=lb_prms.study_seeds)
    p.add_argument('-n','--n_simultaneous_processes',type=int,default=1,
                   help='number of worker processes')
    p.add_argument('--points',type=int,default=lb_prms.points)
    p.add_argument('--coarse-frac',type=float,default=lb_prms.coarse_fraction)
    _add_family(p)
    p.add_argument('--out',default=None)

    if parse:
        return parser.parse_args(argv)
    return parser


def _write_json(data, fp):
    text = json.dumps(data,indent=2)
    if fp:
        with open(fp,'w',encoding='utf-8') as f:
            f.write(text + '\n')
    else:
        print(text)


def _family(args):
    return dict(vbias_lo=args.vbias_lo,vbias_hi=args.vbias_hi,
                vbias_count=args.vbias_count,vdd=args.vdd)


def cmd_serve(args):
    config = load_config(args.config)
    serve(config,host=args.host,port=args.port)


def cmd_list(args):
    config = load_config(args.config)
    for ident in list_instruments(args.host,resolve_port(config,args.port)):
        print(f'{ident.model} {ident.serial} {ident.kind.value}')


def cmd_reference(args):
    config = ExperimentConfig(mode='reference',points=args.points,bench=load_config(args.config),
                              out=args.out,**_family(args))
    run_reference(config)


def cmd_sweep(args):
    bench = load_config(args.config)
    config = ExperimentConfig(mode=args.mode,points=args.points,coarse_fraction=args.coarse_frac,
                              epsilon=args.epsilon,allocation=args.allocation,seed=args.seed,
                              current_limit=args.ilimit,host=args.host,
                              port=resolve_port(bench,args.port),direct=args.direct,
                              psu=args.psu,dmm=args.dmm,bench=bench,out=args.out,
                              **_family(args))
    run_sweep(config)


def cmd_metrics(args):
    report = compute_metrics(read_csv(args.run),read_csv(args.ref))
    text = metrics_to_json(report,args.out)
    if not args.out:
        print(text)


def cmd_noise(args):
    config = load_config(args.config)
    if args.direct:
        bench = Bench.from_config(config)
        selector = args.dmm or next(i.serial for i in bench.registry if i.kind is Kind.DMM)
        dmm = LocalSession(bench,selector)
    else:
        port = resolve_port(config,args.port)
        selector = args.dmm or next(i.serial for i in list_instruments(args.host,port)
                                    if i.kind is Kind.DMM)
        dmm = connect(args.host,port,selector)
    with dmm:
        report = characterize_noise(dmm,args.reads)
    _write_json(report.to_dict(),args.out)


def cmd_study(args):
    config = ExperimentConfig(mode='gwass',points=args.points,coarse_fraction=args.coarse_frac,
                              bench=load_config(args.config),**_family(args))
    summary = run_study(config,args.seeds,args.n_simultaneous_processes)
    _write_json(summary,args.out)


COMMANDS = {'serve':cmd_serve,
            'list':cmd_list,
            'reference':cmd_reference,
            'sweep':cmd_sweep,
            'metrics':cmd_metrics,
            'noise':cmd_noise,
            'study':cmd_study}


def main(argv=None):
    args = get_args(argv)
    logging.basicConfig(level='DEBUG' if args.debug or lb_prms.debug else lb_prms.logging_level,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    start_time = time.time()
    try:
        COMMANDS[args.command](args)
    except ValueError as err:
        # ConfigError, CsvFormatError and VbiasMismatchError are ValueErrors
        log.error('%s',err)
        return 2
    except (LabbenchError,OSError) as err:
        log.error('%s',err)
        return 1
    log.info('%s finished in %.1f s',args.command,time.time()-start_time)
    return 0


if __name__ == '__main__':
    sys.exit(main())
