#pragma once

// Mirrors resources/latex_commands.txt; a unit test keeps the two in sync.

namespace docforge::detail {

inline constexpr const char* kBuiltinLatexLexicon = R"LEX(
# LaTeX command lexicon for formula validation.
# One entry per line: `<command> [required-arg-count]`, or
# `env <environment> [extra-required-arg-count]` for \begin{...} names.
# Lines starting with '#' are comments.
frac 2
dfrac 2
tfrac 2
cfrac 2
binom 2
dbinom 2
tbinom 2
over
choose
sqrt 1
text 1
textrm 1
textbf 1
textit 1
textsf 1
texttt 1
textnormal 1
emph 1
mbox 1
mathrm 1
mathbf 1
mathit 1
mathsf 1
mathtt 1
mathcal 1
mathbb 1
mathfrak 1
mathscr 1
boldsymbol 1
bm 1
operatorname 1
mathop 1
hat 1
widehat 1
tilde 1
widetilde 1
bar 1
overline 1
underline 1
vec 1
dot 1
ddot 1
acute 1
grave 1
breve 1
check 1
mathring 1
overrightarrow 1
overleftarrow 1
overbrace 1
underbrace 1
overset 2
underset 2
stackrel 2
boxed 1
cancel 1
phantom 1
substack 1
tag 1
label 1
color 1
hspace 1
multicolumn 3
cline 1
begin 1
end 1
left
right
middle
big
Big
bigg
Bigg
bigl
bigr
Bigl
Bigr
biggl
biggr
langle
rangle
lfloor
rfloor
lceil
rceil
lvert
rvert
lVert
rVert
vert
Vert
backslash
alpha
beta
gamma
delta
epsilon
varepsilon
zeta
eta
theta
vartheta
iota
kappa
lambda
mu
nu
xi
pi
varpi
rho
varrho
sigma
varsigma
tau
upsilon
phi
varphi
chi
psi
omega
Gamma
Delta
Theta
Lambda
Xi
Pi
Sigma
Upsilon
Phi
Psi
Omega
sum
prod
coprod
int
iint
iiint
oint
bigcup
bigcap
bigoplus
bigotimes
bigvee
bigwedge
lim
limsup
liminf
sup
inf
max
min
arg
det
exp
log
ln
lg
sin
cos
tan
cot
sec
csc
arcsin
arccos
arctan
sinh
cosh
tanh
deg
dim
gcd
hom
ker
Pr
mod
bmod
pmod 1
leq
geq
neq
le
ge
ne
approx
equiv
sim
simeq
cong
propto
ll
gg
subset
supset
subseteq
supseteq
in
notin
ni
mid
parallel
perp
vdash
models
prec
succ
preceq
succeq
pm
mp
times
div
cdot
ast
star
circ
bullet
oplus
otimes
cup
cap
setminus
wedge
vee
land
lor
to
gets
rightarrow
leftarrow
leftrightarrow
Rightarrow
Leftarrow
Leftrightarrow
mapsto
implies
iff
uparrow
downarrow
longrightarrow
longleftarrow
Longrightarrow
Longleftarrow
hookrightarrow
infty
partial
nabla
forall
exists
nexists
emptyset
varnothing
aleph
beth
hbar
ell
wp
Re
Im
prime
angle
triangle
cdots
ldots
dots
vdots
ddots
quad
qquad
neg
lnot
top
bot
therefore
because
dagger
ddagger
not
limits
nolimits
displaystyle
textstyle
scriptstyle
nonumber
notag
hline
rm
bf
it
cal
env matrix
env pmatrix
env bmatrix
env Bmatrix
env vmatrix
env Vmatrix
env smallmatrix
env cases
env dcases
env rcases
env array 1
env subarray 1
env aligned
env align
env align*
env alignat 1
env alignedat 1
env gathered
env gather
env gather*
env equation
env equation*
env split
env multline
env eqnarray
)LEX";

}  // namespace docforge::detail
