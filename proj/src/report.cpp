namespace rnnscope {}
