use grushin_cli::config::{BranchChoice, RunConfig};

const BASE: &str = include_str!("../../../configs/benchmark.toml");
const CRITICAL: &str = include_str!("../../../configs/critical.toml");

fn with_line(text: &str, section: &str, line: &str) -> String {
    let header = format!("[{section}]\n");
    if text.contains(&header) {
        text.replace(&header, &format!("{header}{line}\n"))
    } else {
        format!("{text}\n{header}{line}\n")
    }
}

#[test]
fn shipped_configs_parse() {
    let b = RunConfig::parse(BASE).unwrap();
    assert_eq!(b.grid.nodes, vec![65, 65]);
    assert_eq!(b.solver.branch, BranchChoice::Both);
    assert_eq!(b.solver.mu_fraction, Some(0.05));
    let c = RunConfig::parse(CRITICAL).unwrap();
    assert_eq!(c.critical.eps, vec![0.2, 0.1, 0.05, 0.025]);
    assert!(c.problem.g_weight.ball.is_some());
}

#[test]
fn unknown_keys_rejected_everywhere() {
    let sections = [
        "problem",
        "problem.g_weight",
        "grid",
        "solver",
        "solver.sobolev",
        "critical",
        "critical.profile",
        "output",
    ];
    for sec in sections {
        let text = with_line(BASE, sec, "bogus = 1");
        let err = RunConfig::parse(&text).expect_err(sec).to_string();
        assert!(err.contains("bogus"), "{sec}: {err}");
    }
    let top = format!("bogus = 1\n{BASE}");
    assert!(RunConfig::parse(&top).is_err());
}

#[test]
fn flattened_option_keys_accepted() {
    let text = with_line(BASE, "solver", "max_iter = 17\nnewton_iter = 3");
    let cfg = RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.solver.options.max_iter, 17);
    assert_eq!(cfg.solver.options.newton_iter, 3);
    let text = with_line(CRITICAL, "critical", "path_points = 32");
    assert_eq!(RunConfig::parse(&text).unwrap().critical.options.path_points, 32);
}

#[test]
fn unknown_weight_kind_rejected() {
    let text = BASE.replacen("kind = \"constant\"", "kind = \"gaussian\"", 1);
    assert!(RunConfig::parse(&text).is_err());
}

#[test]
fn node_count_must_match_box() {
    let text = BASE.replace("nodes = [65, 65]", "nodes = [65]");
    let err = RunConfig::parse(&text).unwrap_err().to_string();
    assert!(err.contains("grid.nodes"), "{err}");
}

#[test]
fn defaults_fill_missing_sections() {
    let start = BASE.find("[solver]").unwrap();
    let end = BASE.find("[output]").unwrap();
    let text = format!("{}{}", &BASE[..start], &BASE[end..]);
    let cfg = RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.solver.options.tol, 1e-6);
    assert_eq!(cfg.critical.radius, 0.45);
}
