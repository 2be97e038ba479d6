use vsr::datasets::{bundled, equation_path, export_bundled, load_equation, write_trig_suite, TrigConfig};
use vsr::expr::Operator;
use vsr::oracle::{EquationSpec, OracleError};

#[test]
fn bundled_files_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let paths = export_bundled(dir.path()).unwrap();
    assert_eq!(paths.len(), bundled().len());

    let gas: EquationSpec<f64> = load_equation(equation_path(dir.path(), "feynman", "I.39.22")).unwrap();
    assert_eq!(gas.num_vars, 3);
    assert_eq!(gas.var_domains, vec![(0.01, 1e4), (10.0, 1e3), (1e-3, 1e4)]);
    assert_eq!(gas.equation.tokens(), ["mul", "mul", "8.31", "x1", "div", "x2", "x3"]);

    let v1: EquationSpec<f64> = load_equation(equation_path(dir.path(), "livermore2", "Vars4-1")).unwrap();
    assert_eq!(v1.num_vars, 4);
    assert!(v1.tree().unwrap().constant_slots().is_empty());

    for (b, p) in bundled().iter().zip(&paths) {
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(b.spec::<f64>().unwrap().to_json_string(), text, "{}", b.id);
    }
}

#[test]
fn arity_inconsistent_equation_is_rejected() {
    let text = r#"{"num_vars": 2, "var_domains": [[0, 1], [0, 1]],
        "function_set": ["add", "const"],
        "equation": [["add", "binary"], ["x1", "var"]]}"#;
    match EquationSpec::<f64>::from_json_str(text) {
        Err(OracleError::Schema { key, .. }) => assert_eq!(key, "equation"),
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn trig_suite_is_reproducible() {
    let config = TrigConfig {
        l1: 2,
        l2: 1,
        l3: 1,
        ops: Operator::parse_list("inv,add,sub,mul").unwrap(),
        seed: 1,
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = write_trig_suite(a.path(), &config, 10).unwrap();
    let pb = write_trig_suite(b.path(), &config, 10).unwrap();
    assert_eq!(pa.len(), 10);
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert!(write_trig_suite(a.path(), &config, 0).unwrap().is_empty());
}
