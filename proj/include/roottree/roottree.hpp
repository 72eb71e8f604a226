#ifndef ROOTTREE_ROOTTREE_HPP
#define ROOTTREE_ROOTTREE_HPP

#include "roottree/error.hpp"
#include "roottree/base_tree.hpp"
#include "roottree/tree_dist.hpp"
#include "roottree/random.hpp"
#include "roottree/conjugacy.hpp"
#include "roottree/context_tree.hpp"
#include "roottree/arithmetic_coder.hpp"
#include "roottree/codec.hpp"
#include "roottree/dist_io.hpp"
#include "roottree/oracle.hpp"
#include "roottree/experiment.hpp"
#include "roottree/verify.hpp"

#endif  // ROOTTREE_ROOTTREE_HPP
