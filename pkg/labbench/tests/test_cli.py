import json
import socket

import pytest

from labbench.cli import get_args, main, parse_seeds


def test_parse_seeds():
    assert parse_seeds('1-20') == list(range(1,21))
    assert parse_seeds('1,4,9') == [1,4,9]
    assert parse_seeds('3-5,8') == [3,4,5,8]
    with pytest.raises(ValueError):
        parse_seeds('')


def test_arguments():
    args = get_args(['sweep','--host','bench','--port','5100','--mode','gwass','--points','100',
                     '--coarse-frac','0.2','--seed','3','--vdd','3.0','--ilimit','0.1',
                     '--out','run.csv'])
    assert (args.command,args.host,args.port,args.mode,args.seed) == ('sweep','bench',5100,'gwass',3)
    assert args.coarse_frac == 0.2
    args = get_args(['study','--seeds','1-4','-n','2'])
    assert args.seeds == [1,2,3,4]
    assert args.n_simultaneous_processes == 2


def test_reference_sweep_metrics(tmp_path):
    ref = tmp_path / 'ref.csv'
    run = tmp_path / 'run.csv'
    report = tmp_path / 'report.json'
    assert main(['reference','--points','500','--vbias-count','3','--out',str(ref)]) == 0
    assert main(['sweep','--direct','--mode','gwass','--points','40','--seed','1',
                 '--vbias-count','3','--out',str(run)]) == 0
    assert main(['metrics','--run',str(run),'--ref',str(ref),'--out',str(report)]) == 0
    data = json.loads(report.read_text())
    assert data['n_samples_total'] == 120


def test_exit_codes(tmp_path):
    bad = tmp_path / 'bad.csv'
    bad.write_text('vbias,vin,vout\n1,2,x\n')
    assert main(['metrics','--run',str(bad),'--ref',str(bad)]) == 2
    assert main(['metrics','--run',str(tmp_path / 'missing.csv'),
                 '--ref',str(tmp_path / 'missing.csv')]) == 1
    config = tmp_path / 'bench.json'
    config.write_text('{"port": "x"}')
    assert main(['reference','--config',str(config),'--out',str(tmp_path / 'r.csv')]) == 2
    assert main(['sweep','--direct','--mode','gwass','--points','3',
                 '--out',str(tmp_path / 's.csv')]) == 2

    probe = socket.socket()
    probe.bind(('127.0.0.1',0))
    free_port = probe.getsockname()[1]
    probe.close()
    assert main(['list','--host','127.0.0.1','--port',str(free_port)]) == 1
    with pytest.raises(SystemExit) as info:
        main(['sweep','--mode','spiral','--out','x.csv'])
    assert info.value.code == 2


def test_list_and_noise(bridge, address, capsys, tmp_path):
    host, port = address
    assert main(['list','--host',host,'--port',str(port)]) == 0
    assert 'EDU36311A PSU-001 PSU' in capsys.readouterr().out
    out = tmp_path / 'noise.json'
    assert main(['noise','--host',host,'--port',str(port),'--reads','200','--out',str(out)]) == 0
    assert json.loads(out.read_text())['n'] == 200
