import argparse
import pathlib
import sys

import attr

from qd_hyperfine import config as cf
from qd_hyperfine import errorbudget as eb
from qd_hyperfine import geometry as geo
from qd_hyperfine import pipeline
from qd_hyperfine.physcore import calibration_table, load_database
from qd_hyperfine.utils import (QdHyperfineException, configure_logging,
                                dumps, to_jsonable)
from qd_hyperfine.utils import logger as log

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_STAGE = 2
EXIT_IO = 3


def cmd_defaults(args):
    print(dumps(cf.defaults()))
    return EXIT_OK


def cmd_validate(args):
    cfg = cf.load_config(args.config)
    print(dumps({"valid": True, "config": to_jsonable(cfg.raw)}))
    return EXIT_OK


def cmd_run(args):
    cfg = cf.load_config(args.config)
    if args.output:
        cfg = attr.evolve(cfg, output_dir=str(pathlib.Path(args.output)
                                              .resolve()))
    manifest = pipeline.run(cfg, until=args.stage)
    print(dumps({
        "status": manifest.status,
        "seed": manifest.seed,
        "stages": {k: v.status for k, v in manifest.stages.items()},
        "output_dir": str(cfg.resolve(cfg.output_dir)),
    }))
    return EXIT_OK


def cmd_report(args):
    print(pipeline.report(args.output_dir))
    return EXIT_OK


def cmd_calibrate(args):
    db = load_database(args.database)
    print(dumps(to_jsonable(calibration_table(db))))
    return EXIT_OK


def cmd_structure(args):
    db = load_database(args.database)
    geometry = geo.DotGeometry(args.diameter, args.height,
                               margin_lateral=args.margin_lateral,
                               margin_vertical=args.margin_vertical)
    disorder = geo.DisorderSpec(args.mode, args.fraction,
                                args.interface_thickness, args.seed)
    structure = geo.build_structure(geometry, disorder, args.seed, db)
    out = {
        "sites": structure.site_count,
        "counts": structure.counts(),
        "box_nm": list(structure.box),
        "digest": geo.structure_digest(structure),
    }
    if args.export:
        geo.export_structure(structure, args.export, extra={"seed": args.seed})
        out["exported"] = args.export
    print(dumps(to_jsonable(out)))
    return EXIT_OK


def cmd_budget(args):
    try:
        params = eb.OperationParams(
            exchange=args.exchange, orbital_spacing=args.orbital_spacing,
            zeeman_difference=args.zeeman, static_field=args.b0,
            esr_amplitude=args.bac, field_parallel=args.bn_parallel,
            field_perpendicular=args.bn_perp,
            drift_parallel=args.drift_parallel,
            drift_perpendicular=args.drift_perp, threshold=args.threshold,
            g_e=args.g_e)
    except eb.BudgetException as e:
        raise cf.ConfigException([str(e)])
    budget = eb.evaluate(params)
    if args.table:
        print(eb.format_budget(budget))
    else:
        print(dumps(to_jsonable(eb.budget_rows(budget))))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
            description='Hyperfine coupling and nuclear-spin error budget '
                        'of a lens-shaped InAs/GaAs quantum dot'
    )
    help = "More logging on standard error"
    parser.add_argument('-v', '--verbose', action='store_const', const=1,
                        dest='verbosity', default=0, help=help)
    help = "Only warnings and errors on standard error"
    parser.add_argument('-q', '--quiet', action='store_const', const=-1,
                        dest='verbosity', help=help)
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    p = sub.add_parser('defaults', help="Print the default configuration")
    p.set_defaults(func=cmd_defaults)

    p = sub.add_parser('validate', help="Check a configuration file")
    p.add_argument('config')
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser('run', help="Run the pipeline")
    p.add_argument('config')
    help = "Output directory, overrides the config"
    p.add_argument('-o', '--output', help=help)
    help = "Stop after this stage"
    p.add_argument('--stage', choices=pipeline.STAGES, help=help)
    p.set_defaults(func=cmd_run)

    for stage in pipeline.STAGES[1:-1]:
        p = sub.add_parser(stage, help="Run the pipeline up to the {} "
                           "stage".format(stage))
        p.add_argument('config')
        p.add_argument('-o', '--output',
                       help="Output directory, overrides the config")
        p.set_defaults(func=cmd_run, stage=stage)

    p = sub.add_parser('report', help="Summarize a finished run")
    p.add_argument('output_dir')
    p.set_defaults(func=cmd_report)

    p = sub.add_parser('calibrate',
                       help="Print the orbital density calibration")
    help = "Species/material database, the bundled one by default"
    p.add_argument('--database', help=help)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser('structure', help="Build one dot structure")
    p.add_argument('--diameter', type=float, default=15.0,
                   help="Lens base diameter, nm")
    p.add_argument('--height', type=float, default=6.0,
                   help="Lens height, nm")
    p.add_argument('--margin-lateral', type=float, default=12.0)
    p.add_argument('--margin-vertical', type=float, default=10.0)
    p.add_argument('--mode', choices=geo.DISORDER_MODES, default='none')
    p.add_argument('--fraction', type=float, default=0.0,
                   help="Ga fraction of the alloy")
    p.add_argument('--interface-thickness', type=float, default=1.25)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--database')
    help = "Write the structure table to this path"
    p.add_argument('--export', help=help)
    p.set_defaults(func=cmd_structure)

    p = sub.add_parser('budget', help="Evaluate the error budget")
    p.add_argument('--exchange', type=float, required=True,
                   help="Exchange energy J, eV")
    p.add_argument('--orbital-spacing', type=float, required=True,
                   help="Orbital spacing, eV")
    p.add_argument('--zeeman', type=float, required=True,
                   help="Zeeman splitting difference, eV")
    p.add_argument('--b0', type=float, default=1.0, help="Static field, T")
    p.add_argument('--bac', type=float, default=1e-3,
                   help="ESR amplitude, T")
    p.add_argument('--bn-parallel', type=float, default=0.0)
    p.add_argument('--bn-perp', type=float, default=0.0)
    p.add_argument('--drift-parallel', type=float, default=0.0)
    p.add_argument('--drift-perp', type=float, default=0.0)
    p.add_argument('--threshold', type=float, default=eb.DEFAULT_THRESHOLD)
    p.add_argument('--g-e', type=float, default=eb.DEFAULT_G_E)
    help = "Print a human table instead of JSON"
    p.add_argument('--table', action='store_true', help=help)
    p.set_defaults(func=cmd_budget)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbosity)
    try:
        return args.func(args)
    except cf.ConfigException as e:
        for error in e.errors:
            print(error, file=sys.stderr)
        return EXIT_VALIDATION
    except pipeline.LockException as e:
        log.error("%s", e)
        return EXIT_IO
    except OSError as e:
        log.error("I/O error: %s", e)
        return EXIT_IO
    except QdHyperfineException as e:
        log.error("%s", e)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
