import pytest
from hypothesis import given, settings

from coreguide.cnf import (
    BoundExceeded,
    ClauseCountMismatch,
    Cnf,
    EmptyClauseError,
    Kind,
    Lit,
    LiteralOutOfRange,
    MalformedHeader,
    MissingTerminator,
    NotUnsat,
    all_models,
    brute_force_min_core,
    brute_force_solve,
    lit_node_index,
    minimum_cores,
    node_lit,
    parse_dimacs,
    write_dimacs,
)
from coreguide.datagen import gen_pigeonhole

from conftest import small_cnfs


class TestParse:
    def test_basic(self):
        cnf = parse_dimacs(b"p cnf 2 2\n1 -2 0\n1 2 0\n")
        assert cnf.num_vars == 2
        assert cnf.clauses == ((1, -2), (1, 2))

    def test_comment_and_unit(self):
        cnf = parse_dimacs("c comment\np cnf 1 1\n-1 0\n")
        assert cnf == Cnf(1, ((-1,),))

    def test_out_of_range(self):
        with pytest.raises(LiteralOutOfRange) as exc:
            parse_dimacs("p cnf 2 1\n1 3 0")
        assert exc.value.line == 2

    def test_missing_terminator(self):
        with pytest.raises(MissingTerminator):
            parse_dimacs("p cnf 2 1\n1 2\n")

    def test_empty_clause(self):
        with pytest.raises(EmptyClauseError) as exc:
            parse_dimacs("p cnf 2 2\n1 0\n0\n")
        assert exc.value.line == 3

    @pytest.mark.parametrize("text", ["p cnf x 1\n1 0\n", "p dnf 1 1\n1 0\n", "1 0\n", "p cnf 1\n"])
    def test_malformed_header(self, text):
        with pytest.raises(MalformedHeader):
            parse_dimacs(text)

    def test_count_mismatch(self):
        with pytest.raises(ClauseCountMismatch):
            parse_dimacs("p cnf 2 2\n1 0\n")

    def test_crlf_and_multiline_clause(self):
        cnf = parse_dimacs(b"p cnf 3 1\r\n1 -2\r\n 3 0\r\n")
        assert cnf.clauses == ((1, -2, 3),)

    def test_duplicates_dropped_tautology_kept(self):
        cnf = parse_dimacs("p cnf 2 2\n1 1 -2 0\n2 -2 0\n")
        assert cnf.clauses == ((1, -2), (2, -2))
        assert cnf.tautological() == [False, True]


class TestWrite:
    def test_unit(self):
        assert write_dimacs(Cnf(1, ((1,),))) == b"p cnf 1 1\n1 0\n"

    def test_binary(self):
        assert write_dimacs(Cnf(2, ((1, -2),))) == b"p cnf 2 1\n1 -2 0\n"

    @given(small_cnfs())
    def test_round_trip(self, cnf):
        assert parse_dimacs(write_dimacs(cnf)) == cnf


class TestNodeIndex:
    @pytest.mark.parametrize("lit,n,expected", [(Lit(3, True), 5, 3), (Lit(3, False), 5, 8), (Lit(1, False), 1, 2)])
    def test_examples(self, lit, n, expected):
        assert lit_node_index(lit, n) == expected

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            lit_node_index(Lit(4), 3)

    @pytest.mark.parametrize("n", [1, 2, 7])
    def test_bijection_and_flip_partner(self, n):
        lits = [s * v for v in range(1, n + 1) for s in (1, -1)]
        idx = [lit_node_index(x, n) for x in lits]
        assert sorted(idx) == list(range(1, 2 * n + 1))
        for x in lits:
            assert abs(lit_node_index(x, n) - lit_node_index(-x, n)) == n
            assert node_lit(lit_node_index(x, n), n) == x


class TestBruteForce:
    def test_contradiction(self):
        assert brute_force_solve(Cnf(1, ((1,), (-1,)))).kind is Kind.UNSAT

    def test_lexicographic_first_model(self):
        v = brute_force_solve(Cnf(2, ((1, 2),)))
        assert v.kind is Kind.SAT and v.model == (False, True)

    def test_empty_formula(self):
        v = brute_force_solve(Cnf(3, ()))
        assert v.model == (False, False, False)

    def test_bound(self):
        with pytest.raises(BoundExceeded):
            brute_force_solve(Cnf(27, ()))

    @settings(max_examples=60)
    @given(small_cnfs(max_vars=6))
    def test_matches_enumeration(self, cnf):
        models = list(all_models(cnf))
        v = brute_force_solve(cnf)
        if models:
            assert v.model == models[0]
        else:
            assert v.kind is Kind.UNSAT


class TestMinCore:
    def test_drops_irrelevant_clause(self):
        assert brute_force_min_core(Cnf(2, ((1,), (-1,), (2,)))) == {0, 1}

    def test_whole_formula(self):
        assert brute_force_min_core(Cnf(1, ((1,), (-1,)))) == {0, 1}

    def test_php21_all_clauses(self):
        php = gen_pigeonhole(1)
        assert brute_force_min_core(php) == set(range(php.num_clauses))

    def test_tie_break(self):
        # two disjoint 2-clause cores; the lexicographically smaller one wins
        cnf = Cnf(2, ((2,), (1,), (-2,), (-1,)))
        assert minimum_cores(cnf) == [frozenset({0, 2}), frozenset({1, 3})]
        assert brute_force_min_core(cnf) == {0, 2}

    def test_sat_rejected(self):
        with pytest.raises(NotUnsat):
            brute_force_min_core(Cnf(1, ((1,),)))

    def test_bounds(self):
        with pytest.raises(BoundExceeded):
            brute_force_min_core(Cnf(1, tuple(((1,),) * 17)))
