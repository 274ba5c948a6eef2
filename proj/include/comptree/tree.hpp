#pragma once

#include <cctype>
#include <charconv>
#include <cstdio>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "comptree/basis.hpp"
#include "comptree/errors.hpp"

namespace comptree {

enum class OpKind : int { Plus = 0, Times = 1 };
enum class Dir : int { Left = 0, Right = 1 };

struct LeafLabel {
    int basis_id = 1;     // 1..q
    int dim = 1;          // 1..p
    double weight = 0.0;  // |weight| <= 1 for fitted models
};

// A node is either an operation with two children or a weighted leaf.
struct TreeNode {
    OpKind op = OpKind::Plus;
    std::unique_ptr<TreeNode> left;
    std::unique_ptr<TreeNode> right;
    LeafLabel leaf;

    bool is_leaf() const { return left == nullptr; }

    static std::unique_ptr<TreeNode> make_leaf(LeafLabel l) {
        auto n = std::make_unique<TreeNode>();
        n->leaf = l;
        return n;
    }

    static std::unique_ptr<TreeNode> make_op(OpKind op, std::unique_ptr<TreeNode> l,
                                             std::unique_ptr<TreeNode> r) {
        auto n = std::make_unique<TreeNode>();
        n->op = op;
        n->left = std::move(l);
        n->right = std::move(r);
        return n;
    }

    std::unique_ptr<TreeNode> clone() const {
        if (is_leaf()) return make_leaf(leaf);
        return make_op(op, left->clone(), right->clone());
    }
};

inline int node_count(const TreeNode& n) {
    return n.is_leaf() ? 1 : 1 + node_count(*n.left) + node_count(*n.right);
}

inline int leaf_count(const TreeNode& n) {
    return n.is_leaf() ? 1 : leaf_count(*n.left) + leaf_count(*n.right);
}

inline int op_count(const TreeNode& n) {
    return n.is_leaf() ? 0 : 1 + op_count(*n.left) + op_count(*n.right);
}

// Per-column affine map recorded by the CLI's --rescale: raw values in
// [min,max] are mapped to [0,1] before evaluation.
struct ColumnScale {
    double min = 0.0;
    double max = 1.0;
    friend bool operator==(const ColumnScale&, const ColumnScale&) = default;
};

// A fitted predictor: free intercept plus an optional weighted labeled tree.
// Value semantics; copying deep-copies the tree. Evaluation is pure, so a
// model can be shared across threads once built.
struct Model {
    double intercept = 0.0;
    std::unique_ptr<TreeNode> root;  // empty model predicts the intercept
    int p = 0;
    std::shared_ptr<const BasisSet> basis;
    std::vector<ColumnScale> rescale;  // empty unless the CLI fit rescaled columns

    Model() = default;
    Model(const Model& o)
        : intercept(o.intercept),
          root(o.root ? o.root->clone() : nullptr),
          p(o.p),
          basis(o.basis),
          rescale(o.rescale) {}
    Model& operator=(const Model& o) {
        if (this != &o) {
            Model tmp(o);
            *this = std::move(tmp);
        }
        return *this;
    }
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
};

inline double evaluate_node(const TreeNode& n, const BasisSet& basis,
                            std::span<const double> x) {
    if (n.is_leaf())
        return n.leaf.weight *
               evaluate(basis.at(n.leaf.basis_id), x[static_cast<std::size_t>(n.leaf.dim - 1)]);
    const double l = evaluate_node(*n.left, basis, x);
    const double r = evaluate_node(*n.right, basis, x);
    return n.op == OpKind::Plus ? l + r : l * r;
}

inline double evaluate(const Model& m, std::span<const double> x) {
    if (static_cast<int>(x.size()) != m.p)
        throw std::invalid_argument("evaluate: covariate has " + std::to_string(x.size()) +
                                    " components, model expects " + std::to_string(m.p));
    if (!m.root) return m.intercept;
    return m.intercept + evaluate_node(*m.root, *m.basis, x);
}

// One factor of a product term: the basis function applied to one coordinate.
struct Factor {
    int basis_id = 0;
    int dim = 0;
    friend bool operator==(const Factor&, const Factor&) = default;
};

// The flat view of a weighted tree: a list of product-term weights v and, per
// term, the list of basis factors making up the u component, so that the tree
// minus its intercept equals <v, u(x)>.
struct FlatDecomposition {
    std::vector<double> v;
    std::vector<std::vector<Factor>> u_terms;

    std::size_t m_f() const { return v.size(); }
};

inline FlatDecomposition flatten_node(const TreeNode& n) {
    if (n.is_leaf())
        return {{n.leaf.weight}, {{Factor{n.leaf.basis_id, n.leaf.dim}}}};
    FlatDecomposition l = flatten_node(*n.left);
    FlatDecomposition r = flatten_node(*n.right);
    if (n.op == OpKind::Plus) {
        l.v.insert(l.v.end(), r.v.begin(), r.v.end());
        l.u_terms.insert(l.u_terms.end(), std::make_move_iterator(r.u_terms.begin()),
                         std::make_move_iterator(r.u_terms.end()));
        return l;
    }
    FlatDecomposition out;  // Times: pairwise products, left index major
    out.v.reserve(l.v.size() * r.v.size());
    out.u_terms.reserve(l.v.size() * r.v.size());
    for (std::size_t i = 0; i < l.v.size(); ++i) {
        for (std::size_t j = 0; j < r.v.size(); ++j) {
            out.v.push_back(l.v[i] * r.v[j]);
            std::vector<Factor> fs = l.u_terms[i];
            fs.insert(fs.end(), r.u_terms[j].begin(), r.u_terms[j].end());
            out.u_terms.push_back(std::move(fs));
        }
    }
    return out;
}

inline FlatDecomposition flatten(const Model& m) {
    if (!m.root) throw std::logic_error("flatten: model has no tree");
    return flatten_node(*m.root);
}

inline std::size_t m_f(const Model& m) { return flatten(m).m_f(); }

inline double eval_u_term(std::span<const Factor> term, const BasisSet& basis,
                          std::span<const double> x) {
    double r = 1.0;
    for (const Factor& f : term)
        r *= evaluate(basis.at(f.basis_id), x[static_cast<std::size_t>(f.dim - 1)]);
    return r;
}

// ---------------------------------------------------------------------------
// Canonical text format.
//
//   (model :w0 <float> [:p <int> :basis "<spec>" :q <int> :domain <lo> <hi>]
//          [:rescale (<min> <max> ...)] [<node>])
//
// where <node> is (+ <node> <node>), (* <node> <node>), or
// (leaf :w <float> :phi <int> :dim <int>). Floats carry 17 significant digits
// so the round trip is exact; reads are whitespace-insensitive, writes use
// single spaces. The :p/:basis block is present exactly when the model holds
// a basis with a reconstructible spec.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_node(const TreeNode& n, std::string& out) {
    if (n.is_leaf()) {
        out += "(leaf :w " + fmt17(n.leaf.weight) + " :phi " + std::to_string(n.leaf.basis_id) +
               " :dim " + std::to_string(n.leaf.dim) + ")";
        return;
    }
    out += n.op == OpKind::Plus ? "(+ " : "(* ";
    write_node(*n.left, out);
    out += ' ';
    write_node(*n.right, out);
    out += ')';
}

}  // namespace detail

inline std::string serialize(const Model& m) {
    std::string out = "(model :w0 " + detail::fmt17(m.intercept);
    if (m.basis && !m.basis->spec.empty()) {
        out += " :p " + std::to_string(m.p);
        out += " :basis \"" + m.basis->spec + "\"";
        out += " :q " + std::to_string(m.basis->q());
        out += " :domain " + detail::fmt17(m.basis->domain.lo) + " " +
               detail::fmt17(m.basis->domain.hi);
    }
    if (!m.rescale.empty()) {
        out += " :rescale (";
        for (std::size_t i = 0; i < m.rescale.size(); ++i) {
            if (i) out += ' ';
            out += detail::fmt17(m.rescale[i].min) + " " + detail::fmt17(m.rescale[i].max);
        }
        out += ')';
    }
    if (m.root) {
        out += ' ';
        detail::write_node(*m.root, out);
    }
    out += ')';
    return out;
}

namespace detail {

class SexpReader {
public:
    explicit SexpReader(std::string_view text) : text_(text) {}

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            advance();
    }

    bool at_end() {
        skip_ws();
        return pos_ >= text_.size();
    }

    char peek() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        return text_[pos_];
    }

    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        advance();
    }

    std::string atom() {
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')') break;
            advance();
        }
        if (pos_ == start) fail("expected an atom");
        return std::string(text_.substr(start, pos_ - start));
    }

    std::string quoted_string() {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != '"') fail("expected a quoted string");
        advance();
        const std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] != '"') advance();
        if (pos_ >= text_.size()) fail("unterminated string");
        std::string s(text_.substr(start, pos_ - start));
        advance();
        return s;
    }

    void expect_atom(const std::string& want) {
        skip_ws();
        const int l = line_, c = col_;
        const std::string got = atom();
        if (got != want) throw ParseError(l, c, "expected '" + want + "', got '" + got + "'");
    }

    double number() {
        skip_ws();
        const int l = line_, c = col_;
        const std::string a = atom();
        double value = 0.0;
        const auto res = std::from_chars(a.data(), a.data() + a.size(), value);
        if (res.ec != std::errc{} || res.ptr != a.data() + a.size())
            throw ParseError(l, c, "not a number: '" + a + "'");
        return value;
    }

    long integer() {
        skip_ws();
        const int l = line_, c = col_;
        const std::string a = atom();
        long value = 0;
        const auto res = std::from_chars(a.data(), a.data() + a.size(), value);
        if (res.ec != std::errc{} || res.ptr != a.data() + a.size())
            throw ParseError(l, c, "not an integer: '" + a + "'");
        return value;
    }

    [[noreturn]] void fail(const std::string& msg) { throw ParseError(line_, col_, msg); }

private:
    void advance() {
        if (text_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

inline std::unique_ptr<TreeNode> parse_node(SexpReader& r) {
    r.expect('(');
    const std::string head = r.atom();
    if (head == "leaf") {
        LeafLabel l;
        r.expect_atom(":w");
        l.weight = r.number();
        r.expect_atom(":phi");
        l.basis_id = static_cast<int>(r.integer());
        r.expect_atom(":dim");
        l.dim = static_cast<int>(r.integer());
        if (l.basis_id < 1) r.fail("leaf :phi must be >= 1");
        if (l.dim < 1) r.fail("leaf :dim must be >= 1");
        r.expect(')');
        return TreeNode::make_leaf(l);
    }
    if (head == "+" || head == "*") {
        auto left = parse_node(r);
        auto right = parse_node(r);
        r.expect(')');
        return TreeNode::make_op(head == "+" ? OpKind::Plus : OpKind::Times, std::move(left),
                                 std::move(right));
    }
    r.fail("expected 'leaf', '+' or '*', got '" + head + "'");
}

inline int max_dim(const TreeNode& n) {
    if (n.is_leaf()) return n.leaf.dim;
    return std::max(max_dim(*n.left), max_dim(*n.right));
}

inline int max_basis_id(const TreeNode& n) {
    if (n.is_leaf()) return n.leaf.basis_id;
    return std::max(max_basis_id(*n.left), max_basis_id(*n.right));
}

}  // namespace detail

inline Model deserialize(const std::string& text) {
    detail::SexpReader r(text);
    Model m;
    r.expect('(');
    r.expect_atom("model");
    r.expect_atom(":w0");
    m.intercept = r.number();

    int stated_p = 0, stated_q = 0;
    std::string basis_spec;
    Interval domain{0.0, 1.0};
    bool have_basis = false;

    while (r.peek() != ')' && r.peek() != '(') {
        const std::string key = r.atom();
        if (key == ":p") {
            stated_p = static_cast<int>(r.integer());
        } else if (key == ":basis") {
            basis_spec = r.quoted_string();
            have_basis = true;
        } else if (key == ":q") {
            stated_q = static_cast<int>(r.integer());
        } else if (key == ":domain") {
            domain.lo = r.number();
            domain.hi = r.number();
        } else if (key == ":rescale") {
            r.expect('(');
            while (r.peek() != ')') {
                ColumnScale cs;
                cs.min = r.number();
                cs.max = r.number();
                m.rescale.push_back(cs);
            }
            r.expect(')');
        } else {
            r.fail("unknown model attribute '" + key + "'");
        }
    }
    if (r.peek() == '(') m.root = detail::parse_node(r);
    r.expect(')');
    if (!r.at_end()) r.fail("trailing content after model");

    if (have_basis) {
        m.basis = std::make_shared<const BasisSet>(parse_basis_spec(basis_spec, stated_q, domain));
    }
    m.p = stated_p > 0 ? stated_p : (m.root ? detail::max_dim(*m.root) : 0);
    if (!m.rescale.empty()) m.p = static_cast<int>(m.rescale.size());
    if (m.root) {
        if (detail::max_dim(*m.root) > m.p && stated_p > 0)
            throw DataError("model leaf dim exceeds stated :p");
        if (m.basis && detail::max_basis_id(*m.root) > m.basis->q())
            throw DataError("model leaf :phi exceeds basis size q");
    }
    return m;
}

}  // namespace comptree
