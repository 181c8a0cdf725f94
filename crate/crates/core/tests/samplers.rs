use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use rand::Rng as _;
use rbmlab::anneal::{
    exact_ground_state, ground_state_rate, ExactSampler, QuboProblem, RemoteRequest, RemoteSampler, SampleOptions,
    Sampler, SimulatedAnnealer,
};
use rbmlab::bits::BinaryVector;
use rbmlab::{rng, Error};

fn random_qubo(n: usize, seed: u64) -> QuboProblem {
    let mut r = rng::from_seed(seed);
    let mut p = QuboProblem::new(n);
    for i in 0..n {
        p.set_linear(i, r.random_range(-1.0..1.0)).unwrap();
        for j in i + 1..n {
            p.add_quadratic(i, j, r.random_range(-1.0..1.0)).unwrap();
        }
    }
    p
}

#[test]
fn exact_sampler_matches_boltzmann_frequencies() {
    let p = random_qubo(4, 1);
    let beta = 1.3;
    let n = 40_000;
    let ss = ExactSampler { beta }
        .sample(&p, n, &SampleOptions::default(), &mut rng::from_seed(2))
        .unwrap();
    let mut counts = [0usize; 16];
    for x in ss.expanded() {
        counts[x.to_index() as usize] += 1;
    }
    let weights: Vec<f64> = (0..16)
        .map(|k| (-beta * p.energy(&BinaryVector::from_index(4, k)).unwrap()).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    let chi2: f64 = counts
        .iter()
        .zip(&weights)
        .map(|(&c, &w)| {
            let e = n as f64 * w / z;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    // 15 degrees of freedom, 0.1% upper tail
    assert!(chi2 < 37.7, "chi-square {chi2}");
}

#[test]
fn exact_sampler_respects_hard_clamps() {
    let mut p = random_qubo(5, 3);
    p.set_clamp(2, 1).unwrap();
    let ss = ExactSampler::default()
        .sample(&p, 500, &SampleOptions::default(), &mut rng::from_seed(4))
        .unwrap();
    assert!(ss.expanded().iter().all(|x| x.get(2) == 1));
}

/// Half-integer coefficients, so a unique ground state sits at least 0.5 below
/// every other state.
fn gapped_qubo(n: usize, seed: u64) -> QuboProblem {
    let mut r = rng::from_seed(seed);
    let mut coef = || [-1.0, -0.5, 0.5, 1.0][r.random_range(0..4)];
    let mut p = QuboProblem::new(n);
    for i in 0..n {
        p.set_linear(i, coef()).unwrap();
        for j in i + 1..n {
            p.add_quadratic(i, j, coef()).unwrap();
        }
    }
    p
}

#[test]
fn annealing_finds_ground_state_of_small_problems() {
    let mut tested = 0;
    for seed in 0..50 {
        let p = gapped_qubo(8, 100 + seed);
        let (_, e0) = exact_ground_state(&p).unwrap();
        let degenerate = (0..256)
            .filter(|&k| (p.energy(&BinaryVector::from_index(8, k)).unwrap() - e0).abs() < 1e-9)
            .count()
            > 1;
        if degenerate {
            continue;
        }
        tested += 1;
        if tested > 5 {
            break;
        }
        let ss = SimulatedAnnealer::default()
            .sample(&p, 200, &SampleOptions::default(), &mut rng::from_seed(seed))
            .unwrap();
        let rate = ground_state_rate(&ss, e0, 1e-9);
        assert!(rate >= 0.5, "problem {seed}: ground-state rate {rate}");
        assert!(ss.min_energy().unwrap() >= e0 - 1e-9);
    }
    assert!(tested > 5);
}

/// Serves one HTTP exchange on a loopback port, handing the decoded request
/// to `reply`, which returns `(status, body)`.
fn mock_service<F>(reply: F) -> (String, thread::JoinHandle<RemoteRequest>)
where
    F: FnOnce(&RemoteRequest) -> (u16, String) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/sample", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut len = 0usize;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0u8; len];
        reader.read_exact(&mut body).unwrap();
        let req: RemoteRequest = serde_json::from_slice(&body).unwrap();
        let (status, text) = reply(&req);
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
            text.len()
        )
        .unwrap();
        stream.flush().unwrap();
        req
    });
    (url, handle)
}

#[test]
fn remote_round_trip_decodes_reads() {
    let mut p = random_qubo(3, 7);
    p.set_clamp(0, 0).unwrap();
    let (url, handle) = mock_service(|req| {
        let states: Vec<Vec<u8>> = (0..req.n_reads).map(|_| vec![1; req.n_vars]).collect();
        (200, serde_json::json!({ "states": states }).to_string())
    });
    let sampler = RemoteSampler {
        annealing_time_us: 50.0,
        ..RemoteSampler::new(url)
    };
    let opts = SampleOptions {
        hard_clamp: true,
        auto_scale: true,
    };
    let ss = sampler.sample(&p, 4, &opts, &mut rng::from_seed(0)).unwrap();
    let req = handle.join().unwrap();
    assert_eq!(req.n_reads, 4);
    assert_eq!(req.params.annealing_time_us, 50.0);
    assert!(req.params.auto_scale);
    assert_eq!(req.to_problem().unwrap(), p);
    assert_eq!(ss.total_reads(), 4);
    // clamp applied on top of the returned bits
    assert!(ss.expanded().iter().all(|x| x.as_slice() == [0, 1, 1]));
}

#[test]
fn remote_error_status_keeps_payload() {
    let p = random_qubo(2, 8);
    let (url, handle) = mock_service(|_| (503, r#"{"detail":"busy"}"#.into()));
    let err = RemoteSampler::new(url)
        .sample(&p, 2, &SampleOptions::default(), &mut rng::from_seed(0))
        .unwrap_err();
    handle.join().unwrap();
    match err {
        Error::Remote { payload, .. } => assert!(payload.unwrap().contains("busy")),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn remote_short_response_is_rejected() {
    let p = random_qubo(2, 9);
    let (url, handle) = mock_service(|_| (200, r#"{"states":[[0,1]]}"#.into()));
    let err = RemoteSampler::new(url)
        .sample(&p, 3, &SampleOptions::default(), &mut rng::from_seed(0))
        .unwrap_err();
    handle.join().unwrap();
    assert!(matches!(err, Error::Remote { .. }), "{err}");
}

